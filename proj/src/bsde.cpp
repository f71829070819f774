#include "eqctl/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

#include "eqctl/regression.hpp"

namespace eqctl {

namespace {

constexpr double kLogOverflow = 700.0;

std::size_t idx(int k, int m, int p) { return static_cast<std::size_t>(k) * m + p; }

// Centered Z estimate: E[(Y_{k+1} - E[Y_{k+1}|X_k]) dW_k | X_k] / dt.
void z_step(const StepRegression& reg, const double* ynext, const double* dw, double dt, int m, Exec exec,
            std::vector<double>& fit_next, std::vector<double>& tmp, double* z) {
    reg.project(ynext, fit_next.data());
#pragma omp parallel for schedule(static) if (exec == Exec::kParallel)
    for (int p = 0; p < m; ++p) tmp[p] = (ynext[p] - fit_next[p]) * dw[p] / dt;
    reg.project(tmp.data(), z);
}

McStat spread(const std::vector<double>& target, double fitted) {
    if (target.size() < 2) return McStat{fitted, 0.0, static_cast<long>(target.size())};
    McStat st = mc_mean(target);
    st.mean = fitted;
    return st;
}

struct RegressionOut {
    BsdePair yz;
    std::vector<double> target0;
};

RegressionOut regression_backward(const ProblemSpec& spec, const StatePaths& X, const ControlPath& u,
                                  const BrownianEnsemble& ens, const BsdeOptions& opt) {
    if (!X.grid.same_as(ens.grid) || !u.grid.same_as(ens.grid) || X.n_paths != ens.n_paths)
        throw std::invalid_argument("solve_bsde_regression: inputs on different grids");
    const int n = ens.grid.n_steps, m = ens.n_paths;
    const double dt = ens.grid.dt();
    RegressionOut out;
    BsdePair& r = out.yz;
    r.grid = ens.grid;
    r.n_paths = m;
    r.Y.assign(static_cast<std::size_t>(n + 1) * m, 0.0);
    r.Z.assign(static_cast<std::size_t>(n) * m, 0.0);
    const Exec ex = opt.exec;
#pragma omp parallel for schedule(static) if (ex == Exec::kParallel)
    for (int p = 0; p < m; ++p) r.Y[idx(n, m, p)] = spec.h(X.at(p, n));

    std::vector<double> phi(m), fit_next(m), tmp(m), yhat(m), ynew(m);
    for (int k = n - 1; k >= 0; --k) {
        const double s = ens.grid.time(k);
        const double* xk = X.step(k);
#pragma omp parallel for schedule(static) if (ex == Exec::kParallel)
        for (int p = 0; p < m; ++p) phi[p] = spec.regression_feature(xk[p]);
        StepRegression reg(phi.data(), m, opt.degree, ex);
        const double* ynext = r.Y.data() + idx(k + 1, m, 0);
        double* zk = r.Z.data() + idx(k, m, 0);
        z_step(reg, ynext, ens.step(k), dt, m, ex, fit_next, tmp, zk);
        yhat = fit_next;
        const int max_sweeps = opt.picard_tol > 0.0 ? 10 : std::max(1, opt.picard);
        bool converged = opt.picard_tol <= 0.0;
        for (int it = 0; it < max_sweeps; ++it) {
#pragma omp parallel for schedule(static) if (ex == Exec::kParallel)
            for (int p = 0; p < m; ++p) tmp[p] = ynext[p] + spec.f(s, xk[p], u.at(p, k), yhat[p], zk[p]) * dt;
            reg.project(tmp.data(), ynew.data());
            double change = 0.0, size = 0.0;
            for (int p = 0; p < m; ++p) {
                change = std::max(change, std::abs(ynew[p] - yhat[p]));
                size = std::max(size, std::abs(ynew[p]));
            }
            std::swap(yhat, ynew);
            if (opt.picard_tol > 0.0 && change <= opt.picard_tol * (1.0 + size)) {
                converged = true;
                break;
            }
        }
        if (!converged) throw std::runtime_error(fmt::format("BSDE inner iteration did not converge at step {}", k));
        std::copy(yhat.begin(), yhat.end(), r.Y.begin() + idx(k, m, 0));
        if (k == 0) out.target0 = tmp;
    }
    r.y_at_t = spread(out.target0, r.Y[0]);
    return out;
}

}  // namespace

std::vector<double> eta_process(const std::function<double(int, int)>& beta,
                                const std::function<double(int, int)>& gamma, const BrownianEnsemble& ens,
                                Exec exec) {
    const int n = ens.grid.n_steps, m = ens.n_paths;
    const double dt = ens.grid.dt();
    std::vector<double> eta(static_cast<std::size_t>(n + 1) * m, 1.0);
    int overflow_path = -1;
#pragma omp parallel for schedule(static) if (exec == Exec::kParallel)
    for (int p = 0; p < m; ++p) {
        double logeta = 0.0;
        for (int k = 0; k < n; ++k) {
            const double b = beta(k, p), g = gamma(k, p);
            logeta += (b - 0.5 * g * g) * dt + g * ens.inc(p, k);
            if (std::abs(logeta) > kLogOverflow) {
#pragma omp critical(eta_overflow)
                if (overflow_path < 0 || p < overflow_path) overflow_path = p;
                break;
            }
            eta[idx(k + 1, m, p)] = std::exp(logeta);
        }
    }
    if (overflow_path >= 0)
        throw std::overflow_error(fmt::format("eta_process: exponent beyond {} on path {}", kLogOverflow, overflow_path));
    return eta;
}

BsdePair solve_linear_bsde(const LinearBsdeSpec& spec, const BrownianEnsemble& ens, const BsdeOptions& opt) {
    const int n = ens.grid.n_steps, m = ens.n_paths;
    const double dt = ens.grid.dt();
    const Exec ex = opt.exec;
    std::vector<double> levels;
    const std::vector<double>* feat = spec.feature;
    if (!feat) {
        levels = brownian_levels(ens);
        feat = &levels;
    }
    if (feat->size() != static_cast<std::size_t>(n + 1) * m)
        throw std::invalid_argument("solve_linear_bsde: feature has the wrong shape");

    BsdePair r;
    r.grid = ens.grid;
    r.n_paths = m;
    r.Y.assign(static_cast<std::size_t>(n + 1) * m, 0.0);
    r.Z.assign(static_cast<std::size_t>(n) * m, 0.0);
    // A_k = η_k^{-1}(η_N ξ + Σ_{j≥k} η_j α_j dt), built backward pathwise; the
    // one-step scheme regresses e^{(β−γ²/2)dt+γΔW}·Ξ_{k+1} + α dt instead of A_k.
    const bool one_step = opt.linear_scheme == LinearScheme::kOneStep;
    std::vector<double> A(m), fit_next(m), tmp(m), target(one_step ? m : 0);
    for (int p = 0; p < m; ++p) A[p] = spec.xi(p);
    std::copy(A.begin(), A.end(), r.Y.begin() + idx(n, m, 0));
    for (int k = n - 1; k >= 0; --k) {
        StepRegression reg(feat->data() + idx(k, m, 0), m, opt.degree, ex);
        z_step(reg, r.Y.data() + idx(k + 1, m, 0), ens.step(k), dt, m, ex, fit_next, tmp, r.Z.data() + idx(k, m, 0));
        const double* dw = ens.step(k);
#pragma omp parallel for schedule(static) if (ex == Exec::kParallel)
        for (int p = 0; p < m; ++p) {
            const std::array<double, 3> c =
                spec.coefs ? spec.coefs(k, p) : std::array<double, 3>{spec.alpha(k, p), spec.beta(k, p), spec.gamma(k, p)};
            const double e = std::exp((c[1] - 0.5 * c[2] * c[2]) * dt + c[2] * dw[p]);
            A[p] = e * A[p] + c[0] * dt;
            if (one_step) target[p] = e * r.Y[idx(k + 1, m, p)] + c[0] * dt;
        }
        reg.project(one_step ? target.data() : A.data(), r.Y.data() + idx(k, m, 0));
    }
    r.y_at_t = spread(A, r.Y[0]);
    return r;
}

BsdePair solve_bsde_regression(const ProblemSpec& spec, const StatePaths& X, const ControlPath& u,
                               const BrownianEnsemble& ens, const BsdeOptions& opt) {
    return regression_backward(spec, X, u, ens, opt).yz;
}

CostEstimate evaluate_cost(const ProblemSpec& spec, const StatePaths& X, const ControlPath& u,
                           const BrownianEnsemble& ens, const BsdeOptions& opt) {
    CostEstimate c;
    const int n = ens.grid.n_steps, m = ens.n_paths;
    if (!spec.linear_driver) {
        RegressionOut r = regression_backward(spec, X, u, ens, opt);
        c.contrib = std::move(r.target0);
        c.J = r.yz.y_at_t;
        return c;
    }
    const double dt = ens.grid.dt();
    const LinearDriver& ld = *spec.linear_driver;
    std::vector<double> bg(n), gg(n);
    for (int k = 0; k < n; ++k) {
        bg[k] = ld.beta(ens.grid.time(k));
        gg[k] = ld.gamma(ens.grid.time(k));
    }
    c.closed_form = true;
    c.contrib.assign(m, 0.0);
#pragma omp parallel for schedule(static) if (opt.exec == Exec::kParallel)
    for (int p = 0; p < m; ++p) {
        double eta = 1.0, acc = 0.0;
        for (int k = 0; k < n; ++k) {
            acc += eta * spec.f(ens.grid.time(k), X.at(p, k), u.at(p, k), 0.0, 0.0) * dt;
            eta *= std::exp((bg[k] - 0.5 * gg[k] * gg[k]) * dt + gg[k] * ens.inc(p, k));
        }
        c.contrib[p] = acc + eta * spec.h(X.at(p, n));
    }
    c.J = m >= 2 ? mc_mean(c.contrib) : McStat{c.contrib[0], 0.0, 1};
    return c;
}

FbsdeSolution solve_fbsde(const ProblemSpec& spec, const FeedbackPolicy& policy, double x0,
                          const BrownianEnsemble& ens, const BsdeOptions& opt) {
    FbsdeSolution s;
    s.path = simulate_closed_loop(spec, policy, x0, ens, opt.exec);
    RegressionOut r = regression_backward(spec, s.path.X, s.path.u, ens, opt);
    s.yz = std::move(r.yz);
    if (spec.linear_driver) {
        s.cost = evaluate_cost(spec, s.path.X, s.path.u, ens, opt);
    } else {
        s.cost.contrib = std::move(r.target0);
        s.cost.J = s.yz.y_at_t;
    }
    return s;
}

ContinuityGap continuity_gap_check(const LinearBsdeSpec& spec, const std::function<double(int)>& direction,
                                   const std::vector<double>& deltas, const BrownianEnsemble& ens,
                                   const BsdeOptions& opt) {
    const int n = ens.grid.n_steps, m = ens.n_paths;
    const double dt = ens.grid.dt();
    const BsdePair base = solve_linear_bsde(spec, ens, opt);
    double dir2 = 0.0;
    for (int p = 0; p < m; ++p) dir2 += direction(p) * direction(p);
    dir2 /= m;
    ContinuityGap gap;
    std::vector<double> lx, ly;
    for (double d : deltas) {
        LinearBsdeSpec pert = spec;
        pert.xi = [&spec, &direction, d](int p) { return spec.xi(p) + d * direction(p); };
        const BsdePair other = solve_linear_bsde(pert, ens, opt);
        std::vector<double> sup(m, 0.0), integ(m, 0.0);
        for (int k = 0; k <= n; ++k)
            for (int p = 0; p < m; ++p) {
                const double e = base.y(p, k) - other.y(p, k);
                sup[p] = std::max(sup[p], e * e);
                if (k < n) {
                    const double ez = base.z(p, k) - other.z(p, k);
                    integ[p] += ez * ez * dt;
                }
            }
        const double sg = (block_sum(sup) + block_sum(integ)) / m;
        const double xg = d * d * dir2;
        gap.delta.push_back(d);
        gap.xi_gap.push_back(xg);
        gap.sol_gap.push_back(sg);
        if (xg > 0.0) {
            gap.K = std::max(gap.K, sg / xg);
            if (sg > 0.0) {
                lx.push_back(std::log(xg));
                ly.push_back(std::log(sg));
            }
        }
    }
    if (lx.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            mx += lx[i];
            my += ly[i];
        }
        mx /= lx.size();
        my /= ly.size();
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxy += (lx[i] - mx) * (ly[i] - my);
            sxx += (lx[i] - mx) * (lx[i] - mx);
        }
        gap.slope = sxx > 0 ? sxy / sxx : 0.0;
    }
    return gap;
}

void write_bsde_csv(const BsdePair& yz, const std::string& path) {
    auto out = fmt::output_file(path);
    out.print("path_id,step,Y,Z\n");
    const int n = yz.grid.n_steps, m = yz.n_paths;
    for (int p = 0; p < m; ++p)
        for (int k = 0; k <= n; ++k)
            out.print("{},{},{:.17g},{:.17g}\n", p, k, yz.y(p, k), yz.z(p, std::min(k, n - 1)));
}

}  // namespace eqctl
