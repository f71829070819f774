#include "eqctl/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/os.h>

namespace eqctl {

CoefDerivs AdjointContext::at(int k, int p) const {
    const double sk = s(k);
    const double x = X->at(p, k);
    const UView uk = u->at(p, k);
    const double y = yz->y(p, k), z = yz->z(p, k);
    CoefDerivs c;
    c.b_x = spec->b_x(sk, x, uk);
    c.b_xx = spec->b_xx(sk, x, uk);
    c.sigma_x = spec->sigma_x(sk, x, uk);
    c.sigma_xx = spec->sigma_xx(sk, x, uk);
    c.df = spec->grad_f(sk, x, uk, y, z);
    c.d2f = spec->hess_f(sk, x, uk, y, z);
    return c;
}

AdjointContext make_context(const ProblemSpec& spec, const FbsdeSolution& sol, const BrownianEnsemble& ens) {
    return AdjointContext{&spec, &sol.path.X, &sol.path.u, &sol.yz, &ens};
}

double generator_g(const CoefDerivs& c, double p, double q) {
    const double fx = c.df[0], fy = c.df[1], fz = c.df[2];
    return (c.b_x + fz * c.sigma_x + fy) * p + (c.sigma_x + fz) * q + fx;
}

double generator_G(const CoefDerivs& c, double p, double q, double P, double Q) {
    const double fy = c.df[1], fz = c.df[2];
    const double v[3] = {1.0, p, c.sigma_x * p + q};
    double quad = 0.0;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) quad += v[a] * 0.5 * (c.d2f[a][b] + c.d2f[b][a]) * v[b];
    return (2.0 * c.b_x + c.sigma_x * c.sigma_x + 2.0 * fz * c.sigma_x + fy) * P + (2.0 * c.sigma_x + fz) * Q +
           c.b_xx * p + c.sigma_xx * (fz * p + q) + quad;
}

Adjoints solve_adjoints(const AdjointContext& ctx, const BsdeOptions& opt) {
    const ProblemSpec& spec = *ctx.spec;
    const StatePaths& X = *ctx.X;
    const BrownianEnsemble& ens = *ctx.ens;
    const int n = ens.grid.n_steps, m = ens.n_paths;

    std::vector<double> feat(static_cast<std::size_t>(n + 1) * m);
#pragma omp parallel for schedule(static) if (opt.exec == Exec::kParallel)
    for (std::size_t i = 0; i < feat.size(); ++i) feat[i] = spec.regression_feature(X.x[i]);

    // g and G are affine in their own unknowns: α + β·(p|P) + γ·(q|Q).
    LinearBsdeSpec first;
    first.feature = &feat;
    first.xi = [&](int p) { return spec.h_x(X.at(p, n)); };
    first.coefs = [&](int k, int p) {
        const CoefDerivs c = ctx.at(k, p);
        const double fy = c.df[1], fz = c.df[2];
        return std::array<double, 3>{c.df[0], c.b_x + fz * c.sigma_x + fy, c.sigma_x + fz};
    };
    Adjoints adj;
    adj.n_paths = m;
    BsdePair pq = solve_linear_bsde(first, ens, opt);
    adj.first.p = std::move(pq.Y);
    adj.first.q = std::move(pq.Z);
    adj.first.p_at_t = pq.y_at_t;

    LinearBsdeSpec second;
    second.feature = &feat;
    second.xi = [&](int p) { return spec.h_xx(X.at(p, n)); };
    second.coefs = [&](int k, int p) {
        const CoefDerivs c = ctx.at(k, p);
        const double fy = c.df[1], fz = c.df[2];
        const double pp = adj.p(p, k), qq = adj.q(p, k);
        return std::array<double, 3>{generator_G(c, pp, qq, 0.0, 0.0),
                                     2.0 * c.b_x + c.sigma_x * c.sigma_x + 2.0 * fz * c.sigma_x + fy,
                                     2.0 * c.sigma_x + fz};
    };
    BsdePair PQ = solve_linear_bsde(second, ens, opt);
    adj.second.P = std::move(PQ.Y);
    adj.second.Q = std::move(PQ.Z);
    adj.second.P_at_t = PQ.y_at_t;

    for (double v : adj.first.p)
        if (!std::isfinite(v)) throw std::runtime_error("solve_adjoints: non-finite p");
    for (double v : adj.second.P)
        if (!std::isfinite(v)) throw std::runtime_error("solve_adjoints: non-finite P");
    return adj;
}

std::vector<double> kappa_process(const AdjointContext& ctx, Exec exec) {
    auto grad = [&](int k, int p) {
        return ctx.spec->grad_f(ctx.s(k), ctx.X->at(p, k), ctx.u->at(p, k), ctx.yz->y(p, k), ctx.yz->z(p, k));
    };
    auto fy = [&](int k, int p) { return grad(k, p)[1]; };
    auto fz = [&](int k, int p) { return grad(k, p)[2]; };
    return eta_process(fy, fz, *ctx.ens, exec);
}

void write_adjoint_csv(const Adjoints& adj, const std::vector<double>& kappa, const TimeGrid& grid,
                       const std::string& path) {
    auto out = fmt::output_file(path);
    out.print("path_id,step,p,q,P,Q,kappa\n");
    const int n = grid.n_steps, m = adj.n_paths;
    for (int p = 0; p < m; ++p)
        for (int k = 0; k <= n; ++k) {
            const int kz = std::min(k, n - 1);
            out.print("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", p, k, adj.p(p, k), adj.q(p, kz),
                      adj.P(p, k), adj.Q(p, kz), kappa[static_cast<std::size_t>(k) * m + p]);
        }
}

}  // namespace eqctl
