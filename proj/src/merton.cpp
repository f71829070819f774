#include "eqctl/merton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/os.h>
#include <spdlog/spdlog.h>

#include "eqctl/regression.hpp"

namespace eqctl::merton {

void MarketParams::validate() const {
    if (!(r > 0)) throw std::invalid_argument("market: r must be positive");
    if (!(mean_return > r)) throw std::invalid_argument("market: mean_return must exceed r");
    if (!(sigma > 0)) throw std::invalid_argument("market: sigma must be positive");
}

Utility crra_utility(double lambda, double weight) {
    if (!(lambda > 0 && lambda < 1)) throw std::invalid_argument("crra_utility: lambda must lie in ]0,1[");
    if (!(weight > 0)) throw std::invalid_argument("crra_utility: weight must be positive");
    Utility u;
    u.lambda = lambda;
    u.weight = weight;
    u.u = [=](double x) { return x <= 0 ? 0.0 : weight * std::pow(x, lambda) / lambda; };
    u.u_prime = [=](double x) {
        return x <= 0 ? std::numeric_limits<double>::infinity() : weight * std::pow(x, lambda - 1.0);
    };
    u.u_second = [=](double x) {
        return x <= 0 ? -std::numeric_limits<double>::infinity() : weight * (lambda - 1.0) * std::pow(x, lambda - 2.0);
    };
    u.inverse_neg_marginal = [=](double y) {
        if (!(y < 0)) throw std::domain_error("Upsilon: argument must be negative");
        return std::pow(-y / weight, 1.0 / (lambda - 1.0));
    };
    return u;
}

double DiscountFn::operator()(double s, double t) const {
    const double lag = s - t;
    switch (family) {
        case DiscountFamily::kExponential: return std::exp(-delta * lag);
        case DiscountFamily::kHyperbolic: return 1.0 / (1.0 + K * lag);
        case DiscountFamily::kHyperbolicPower: return std::pow(1.0 + K * lag, -k);
        case DiscountFamily::kCustom: return custom(lag);
    }
    return 0.0;
}

std::string DiscountFn::name() const {
    switch (family) {
        case DiscountFamily::kExponential: return "exponential";
        case DiscountFamily::kHyperbolic: return "hyperbolic";
        case DiscountFamily::kHyperbolicPower: return "hyperbolic_power";
        case DiscountFamily::kCustom: return "custom";
    }
    return "?";
}

DiscountFn exponential_discount(double delta) {
    DiscountFn d;
    d.family = DiscountFamily::kExponential;
    d.delta = delta;
    return d;
}

DiscountFn hyperbolic_discount(double K) {
    if (!(K >= 0)) throw std::invalid_argument("hyperbolic_discount: K must be nonnegative");
    DiscountFn d;
    d.family = DiscountFamily::kHyperbolic;
    d.K = K;
    return d;
}

DiscountFn hyperbolic_power_discount(double K, double k) {
    if (!(K >= 0) || !(k > 0)) throw std::invalid_argument("hyperbolic_power_discount: need K >= 0, k > 0");
    DiscountFn d;
    d.family = DiscountFamily::kHyperbolicPower;
    d.K = K;
    d.k = k;
    return d;
}

double check_time_consistency(const DiscountFn& h, const std::vector<std::array<double, 3>>& triples) {
    double worst = 0.0;
    for (const auto& [t, s, tau] : triples) {
        if (!(t < s && s < tau)) throw std::invalid_argument("check_time_consistency: need t < s < tau");
        const double v = h(s, t) * h(tau, s) - h(tau, t);
        if (std::abs(v) > std::abs(worst)) worst = v;
    }
    return worst;
}

RecursiveSpec constant_recursive(double beta, double gamma) {
    return RecursiveSpec{[beta](double, double) { return beta; }, [gamma](double, double) { return gamma; }};
}

// ---------------------------------------------------------------------------
// GridPolicy

namespace {

// Natural cubic spline moments on a uniform grid of spacing h.
void spline_moments(const double* y, int n, double h, double* M) {
    if (n < 3) {
        for (int i = 0; i < n; ++i) M[i] = 0.0;
        return;
    }
    const int m = n - 2;
    std::vector<double> c(m), d(m);
    for (int i = 0; i < m; ++i) d[i] = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
    // Thomas algorithm on tridiag(1, 4, 1).
    c[0] = 1.0 / 4.0;
    d[0] /= 4.0;
    for (int i = 1; i < m; ++i) {
        const double den = 4.0 - c[i - 1];
        c[i] = 1.0 / den;
        d[i] = (d[i] - d[i - 1]) / den;
    }
    M[0] = M[n - 1] = 0.0;
    M[m] = d[m - 1];
    for (int i = m - 2; i >= 0; --i) M[i + 1] = d[i] - c[i] * M[i + 2];
}

// Value and ξ-derivatives of the spline row on nodes lo + j·h (constant outside).
void spline_eval(const double* y, const double* M, int n, double lo, double h, double xi, double out[3]) {
    if (n == 1 || xi <= lo) {
        out[0] = y[0];
        out[1] = out[2] = 0.0;
        return;
    }
    if (xi >= lo + (n - 1) * h) {
        out[0] = y[n - 1];
        out[1] = out[2] = 0.0;
        return;
    }
    const int j = std::min(n - 2, static_cast<int>((xi - lo) / h));
    const double A = (lo + (j + 1) * h - xi) / h, B = 1.0 - A;
    out[0] = A * y[j] + B * y[j + 1] + ((A * A * A - A) * M[j] + (B * B * B - B) * M[j + 1]) * h * h / 6.0;
    out[1] = (y[j + 1] - y[j]) / h - (3.0 * A * A - 1.0) / 6.0 * h * M[j] + (3.0 * B * B - 1.0) / 6.0 * h * M[j + 1];
    out[2] = A * M[j] + B * M[j + 1];
}

}  // namespace

GridPolicy::GridPolicy(std::vector<double> s_nodes, int nx, double log_lo, double log_hi)
    : s_(std::move(s_nodes)), nx_(nx) {
    if (s_.empty() || nx_ < 1) throw std::invalid_argument("GridPolicy: empty node set");
    if (!(log_hi >= log_lo)) throw std::invalid_argument("GridPolicy: bad x range");
    lo_.assign(s_.size(), log_lo);
    hi_.assign(s_.size(), log_hi);
    zeta_.assign(s_.size() * nx_, 0.0);
    c_ = mz_ = mc_ = zeta_;
}

double GridPolicy::x_node(int i, int j) const {
    return nx_ == 1 ? std::exp(0.5 * (lo_[i] + hi_[i])) : std::exp(lo_[i] + (hi_[i] - lo_[i]) * j / (nx_ - 1));
}

void GridPolicy::set_row_range(int i, double log_lo, double log_hi) {
    if (!(log_hi > log_lo)) throw std::invalid_argument("GridPolicy: bad x range");
    lo_[i] = log_lo;
    hi_[i] = log_hi;
}

void GridPolicy::fill(double zeta, double c) {
    std::fill(zeta_.begin(), zeta_.end(), zeta);
    std::fill(c_.begin(), c_.end(), c);
    refresh();
}

void GridPolicy::refresh() {
    for (int i = 0; i < ns(); ++i) {
        const double h = nx_ > 1 ? (hi_[i] - lo_[i]) / (nx_ - 1) : 1.0;
        spline_moments(zeta_.data() + i * nx_, nx_, h, mz_.data() + i * nx_);
        spline_moments(c_.data() + i * nx_, nx_, h, mc_.data() + i * nx_);
    }
}

void GridPolicy::eval_row(int i, double xi, double out[2][3], bool* inside) const {
    const double h = nx_ > 1 ? (hi_[i] - lo_[i]) / (nx_ - 1) : 1.0;
    spline_eval(zeta_.data() + i * nx_, mz_.data() + i * nx_, nx_, lo_[i], h, xi, out[0]);
    spline_eval(c_.data() + i * nx_, mc_.data() + i * nx_, nx_, lo_[i], h, xi, out[1]);
    *inside = nx_ > 1 && xi > lo_[i] && xi < hi_[i];
}

void GridPolicy::eval(double s, double x, double* u, double* d1, double* d2) const {
    int i = 0;
    double w = 0.0;
    if (ns() > 1) {
        if (s <= s_.front()) {
            i = 0;
        } else if (s >= s_.back()) {
            i = ns() - 2;
            w = 1.0;
        } else {
            i = static_cast<int>(std::upper_bound(s_.begin(), s_.end(), s) - s_.begin()) - 1;
            i = std::min(i, ns() - 2);
            w = (s - s_[i]) / (s_[i + 1] - s_[i]);
        }
    }
    const double xi = std::log(std::max(x, 1e-300));
    double a[2][3], b[2][3] = {{0, 0, 0}, {0, 0, 0}};
    bool in_a = false, in_b = false;
    if (w < 1.0) eval_row(i, xi, a, &in_a);
    else a[0][0] = a[0][1] = a[0][2] = a[1][0] = a[1][1] = a[1][2] = 0.0;
    if (w > 0.0) eval_row(i + 1, xi, b, &in_b);
    const double lo[2] = {-1.0, 0.0}, hi[2] = {1.0, 1.0};
    for (int comp = 0; comp < 2; ++comp) {
        double v[3];
        for (int r = 0; r < 3; ++r) v[r] = (1.0 - w) * a[comp][r] + w * b[comp][r];
        const bool clamped = v[0] < lo[comp] || v[0] > hi[comp];
        u[comp] = std::clamp(v[0], lo[comp], hi[comp]);
        if (d1) d1[comp] = clamped ? 0.0 : v[1] / x;
        if (d2) d2[comp] = clamped ? 0.0 : (v[2] - v[1]) / (x * x);
    }
}

FeedbackPolicy GridPolicy::feedback() const {
    auto g = std::make_shared<const GridPolicy>(*this);
    FeedbackPolicy f;
    f.dim = 2;
    f.pi = [g](double s, double x, double* u) { g->eval(s, x, u); };
    f.derivs = [g](double s, double x, double* d1, double* d2) {
        double u[2];
        g->eval(s, x, u, d1, d2);
    };
    return f;
}

GridPolicy make_grid_policy(const Setup& st, int ns_cells, int nx_nodes, double log_halfwidth) {
    if (ns_cells < 1 || nx_nodes < 1) throw std::invalid_argument("make_grid_policy: need at least one cell");
    std::vector<double> s(ns_cells + 1);
    for (int i = 0; i <= ns_cells; ++i) s[i] = i == ns_cells ? st.T : st.t + (st.T - st.t) * i / ns_cells;
    const double l0 = std::log(st.x0);
    return GridPolicy(std::move(s), nx_nodes, l0 - log_halfwidth, l0 + log_halfwidth);
}

// ---------------------------------------------------------------------------
// Problem assembly

namespace {

// υ′(cx)·c and υ″(cx)·c², zero at c = 0 (both vanish there for CRRA).
double up_times_c(const Utility& v, double cx, double c) { return c == 0.0 ? 0.0 : v.u_prime(cx) * c; }
double upp_times_c2(const Utility& v, double cx, double c) { return c == 0.0 ? 0.0 : v.u_second(cx) * c * c; }

struct PolicyDerivs {
    double zeta_x = 0, zeta_xx = 0, c_x = 0, c_xx = 0;
};

PolicyDerivs policy_derivs(const FeedbackPolicy& pol, double s, double x) {
    double d1[2], d2[2];
    pol.derivs(s, x, d1, d2);
    return PolicyDerivs{d1[0], d2[0], d1[1], d2[1]};
}

}  // namespace

ProblemSpec build_merton_spec(const Setup& st, const FeedbackPolicy& policy, DerivMode mode) {
    st.market.validate();
    if (!policy.derivs) throw std::invalid_argument("build_merton_spec: policy derivative callbacks are required");
    if (policy.dim != 2) throw std::invalid_argument("build_merton_spec: policy must return (zeta, c)");
    if (!st.utility.u || !st.bequest.u) throw std::invalid_argument("build_merton_spec: utilities not set");
    if (!st.recursive.beta || !st.recursive.gamma) throw std::invalid_argument("build_merton_spec: recursive spec not set");

    const double r = st.market.r, mu = st.market.mu(), sig = st.market.sigma, t = st.t, T = st.T;
    const Utility v = st.utility, vh = st.bequest;
    const DiscountFn hb = st.discount, hh = st.discount_hat;
    const RecursiveSpec rec = st.recursive;

    ProblemSpec s;
    s.name = "merton-crra-" + hb.name();
    s.control_set = Box{{-1.0, 0.0}, {1.0, 1.0}};
    s.x_lo = 0.0;
    s.b = [=](double, double x, UView u) { return x * (r + mu * u[0] - u[1]); };
    s.sigma = [=](double, double x, UView u) { return sig * x * u[0]; };
    s.f = [=](double sk, double x, UView u, double y, double z) {
        return -hb(sk, t) * (v.u(u[1] * x) + rec.beta(sk, t) * y + rec.gamma(sk, t) * z);
    };
    s.h = [=](double x) { return -hh(T, t) * vh.u(x); };
    s.h_x = [=](double x) { return -hh(T, t) * vh.u_prime(x); };
    s.h_xx = [=](double x) { return -hh(T, t) * vh.u_second(x); };

    if (mode == DerivMode::kOpenLoop) {
        s.b_x = [=](double, double, UView u) { return r + mu * u[0] - u[1]; };
        s.b_xx = [](double, double, UView) { return 0.0; };
        s.sigma_x = [=](double, double, UView u) { return sig * u[0]; };
        s.sigma_xx = [](double, double, UView) { return 0.0; };
        s.grad_f = [=](double sk, double x, UView u, double, double) {
            const double hk = hb(sk, t);
            return Vec3{-hk * up_times_c(v, u[1] * x, u[1]), -hk * rec.beta(sk, t), -hk * rec.gamma(sk, t)};
        };
        s.hess_f = [=](double sk, double x, UView u, double, double) {
            Mat3 H{};
            H[0][0] = -hb(sk, t) * upp_times_c2(v, u[1] * x, u[1]);
            return H;
        };
    } else {
        s.b_x = [=](double sk, double x, UView u) {
            const PolicyDerivs d = policy_derivs(policy, sk, x);
            return r + mu * (u[0] + x * d.zeta_x) - (u[1] + x * d.c_x);
        };
        s.b_xx = [=](double sk, double x, UView) {
            const PolicyDerivs d = policy_derivs(policy, sk, x);
            return mu * (2.0 * d.zeta_x + x * d.zeta_xx) - (2.0 * d.c_x + x * d.c_xx);
        };
        s.sigma_x = [=](double sk, double x, UView u) {
            const PolicyDerivs d = policy_derivs(policy, sk, x);
            return sig * (u[0] + x * d.zeta_x);
        };
        s.sigma_xx = [=](double sk, double x, UView) {
            const PolicyDerivs d = policy_derivs(policy, sk, x);
            return sig * (2.0 * d.zeta_x + x * d.zeta_xx);
        };
        s.grad_f = [=](double sk, double x, UView u, double, double) {
            const PolicyDerivs d = policy_derivs(policy, sk, x);
            const double hk = hb(sk, t), cx = u[1] * x, w = u[1] + x * d.c_x;
            const double fx = w == 0.0 ? 0.0 : -hk * v.u_prime(cx) * w;
            return Vec3{fx, -hk * rec.beta(sk, t), -hk * rec.gamma(sk, t)};
        };
        s.hess_f = [=](double sk, double x, UView u, double, double) {
            const PolicyDerivs d = policy_derivs(policy, sk, x);
            const double hk = hb(sk, t), cx = u[1] * x, w = u[1] + x * d.c_x, w2 = 2.0 * d.c_x + x * d.c_xx;
            Mat3 H{};
            if (cx > 0) H[0][0] = -hk * (v.u_second(cx) * w * w + v.u_prime(cx) * w2);
            return H;
        };
    }

    s.linear_driver = LinearDriver{[=](double sk) { return -hb(sk, t) * rec.beta(sk, t); },
                                   [=](double sk) { return -hb(sk, t) * rec.gamma(sk, t); }};
    // Exact log-coordinate step: keeps X > 0 and X(T) = x0 e^{r(T−t)} at ζ = c = 0.
    s.step = [=](double, double x, UView u, double dt, double dw) {
        const double vol = sig * u[0];
        return x * std::exp((r + mu * u[0] - u[1] - 0.5 * vol * vol) * dt + vol * dw);
    };
    s.feature = [](double x) { return std::log(x); };
    return s;
}

double expanded_g(const Setup& st, const FeedbackPolicy& policy, double s, double x, double p, double q) {
    double u[2];
    policy.pi(s, x, u);
    const PolicyDerivs d = policy_derivs(policy, s, x);
    const double r = st.market.r, mu = st.market.mu(), sig = st.market.sigma;
    const double hk = st.discount(s, st.t), beta = st.recursive.beta(s, st.t), gam = st.recursive.gamma(s, st.t);
    const double P1 = u[0] + x * d.zeta_x, P2 = u[1] + x * d.c_x;
    const double brace_p = r + mu * P1 - P2 - sig * hk * gam * P1 - hk * beta;
    const double brace_q = sig * P1 - hk * gam;
    const double last = P2 == 0.0 ? 0.0 : hk * st.utility.u_prime(u[1] * x) * P2;
    return brace_p * p + brace_q * q - last;
}

double expanded_G00(const Setup& st, const FeedbackPolicy& policy, double s, double x, double p, double q) {
    double u[2];
    policy.pi(s, x, u);
    const PolicyDerivs d = policy_derivs(policy, s, x);
    const double mu = st.market.mu(), sig = st.market.sigma;
    const double hk = st.discount(s, st.t), gam = st.recursive.gamma(s, st.t);
    const double cx = u[1] * x, w = u[1] + x * d.c_x;
    const double a = ((mu - sig * hk * gam) * p + sig * q) * (2.0 * d.zeta_x + x * d.zeta_xx);
    if (cx <= 0) return a - p * (2.0 * d.c_x + x * d.c_xx);
    return a - (hk * st.utility.u_prime(cx) + p) * (2.0 * d.c_x + x * d.c_xx) -
           hk * st.utility.u_second(cx) * w * w;
}

double expanded_delta_H(const Setup& st, double x, const std::array<double, 2>& u, const std::array<double, 2>& ub,
                        double, double, double p, double q, double P) {
    const double mu = st.market.mu(), sig = st.market.sigma, gam = st.recursive.gamma(st.t, st.t);
    const double dz = u[0] - ub[0], dc = u[1] - ub[1];
    return x * p * (mu * dz - dc) + x * sig * q * dz + 0.5 * P * x * x * sig * sig * dz * dz -
           (st.utility.u(x * u[1]) - st.utility.u(x * ub[1])) - x * sig * p * gam * dz;
}

double expanded_bold_delta_H(const Setup& st, double x, const std::array<double, 2>& u,
                             const std::array<double, 2>& ub, double p, double q, double P) {
    const double mu = st.market.mu(), sig = st.market.sigma;
    const double dz = u[0] - ub[0], dc = u[1] - ub[1];
    return x * p * (mu * dz - dc) + x * sig * q * dz + 0.5 * P * x * x * sig * sig * dz * dz;
}

// ---------------------------------------------------------------------------
// Adjoints and conditions

AdjointSolve merton_adjoint_solve(const Setup& st, const FeedbackPolicy& policy, const BrownianEnsemble& ens,
                                  const BsdeOptions& opt, DerivMode mode) {
    AdjointSolve out;
    out.spec = build_merton_spec(st, policy, mode);
    out.fbsde = solve_fbsde(out.spec, policy, st.x0, ens, opt);
    const AdjointContext ctx = make_context(out.spec, out.fbsde, ens);
    out.adj = solve_adjoints(ctx, opt);
    out.kappa = kappa_process(ctx, opt.exec);

    // Expanded p-drift against the generic generator on the feedback coefficients.
    const ProblemSpec fb = mode == DerivMode::kFeedback ? out.spec : build_merton_spec(st, policy, DerivMode::kFeedback);
    const AdjointContext fctx = make_context(fb, out.fbsde, ens);
    const int n = ens.grid.n_steps, m = ens.n_paths;
    const int ksamp = std::max(1, n / 8), psamp = std::min(m, 256);
    for (int k = 0; k < n; k += ksamp)
        for (int p = 0; p < psamp; ++p) {
            const double pp = out.adj.p(p, k), qq = out.adj.q(p, k);
            const double a = expanded_g(st, policy, ctx.s(k), out.fbsde.path.X.at(p, k), pp, qq);
            const double b = generator_g(fctx.at(k, p), pp, qq);
            out.expanded_drift_gap = std::max(out.expanded_drift_gap, std::abs(a - b));
        }
    if (!(out.expanded_drift_gap <= 1e-10))
        spdlog::error("merton_adjoint_solve: expanded drift differs from generator_g by {:.3e}", out.expanded_drift_gap);
    return out;
}

CandidateBundle make_bundle(const AdjointSolve& a, const BrownianEnsemble& ens) {
    return CandidateBundle{make_context(a.spec, a.fbsde, ens), &a.adj, &a.kappa};
}

ConditionReport equilibrium_conditions_check(const Setup& st, const StatePaths& X, const ControlPath& u,
                                             const Adjoints& adj, double tol) {
    const int n = X.grid.n_steps, m = X.n_paths;
    const double mu = st.market.mu(), sig = st.market.sigma;
    ConditionReport rep;
    rep.r1.resize(n);
    rep.r2.resize(n);
    std::vector<double> a(m), b(m), ap(m);
    for (int k = 0; k < n; ++k) {
        const double s = X.grid.time(k), hk = st.discount(s, st.t), gam = st.recursive.gamma(s, st.t);
#pragma omp parallel for schedule(static)
        for (int p = 0; p < m; ++p) {
            const double pp = adj.p(p, k), qq = adj.q(p, k);
            const double cx = u.at(p, k)[1] * X.at(p, k);
            a[p] = std::abs((mu - sig * hk * gam) * pp + sig * qq);
            b[p] = std::abs(pp + hk * st.utility.u_prime(cx));
            ap[p] = std::abs(pp);
        }
        const double scale = block_sum(ap);
        rep.r1[k] = block_sum(a) / (mu * scale);
        rep.r2[k] = block_sum(b) / scale;
        rep.max_r1 = std::max(rep.max_r1, rep.r1[k]);
        rep.max_r2 = std::max(rep.max_r2, rep.r2[k]);
    }
    rep.pass = rep.max_r1 <= tol && rep.max_r2 <= tol;
    return rep;
}

// ---------------------------------------------------------------------------
// Fixed point

namespace {

double quantile(std::vector<double> v, double q) {
    const std::size_t i = std::min(v.size() - 1, static_cast<std::size_t>(q * (v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + i, v.end());
    return v[i];
}

}  // namespace

FixedPointResult solve_policy_fixed_point(const Setup& st, const BrownianEnsemble& ens, const FixedPointOptions& opt) {
    if (opt.max_iter < 1) throw std::invalid_argument("solve_policy_fixed_point: budget must be >= 1");
    const int n = ens.grid.n_steps, m = ens.n_paths;
    const double mu = st.market.mu(), sig = st.market.sigma;

    GridPolicy pol = make_grid_policy(st, opt.ns_cells, opt.nx_nodes);
    pol.fill(opt.zeta0, opt.c0);
    FixedPointResult res{pol, {}, false, 0, 0.0};
    double best = std::numeric_limits<double>::infinity();

    std::vector<int> node_step(pol.ns());
    for (int i = 0; i < pol.ns(); ++i)
        node_step[i] = std::min(n - 1, static_cast<int>(std::lround((pol.s_nodes()[i] - st.t) / ens.grid.dt())));

    for (int it = 1; it <= opt.max_iter; ++it) {
        const AdjointSolve as = merton_adjoint_solve(st, pol.feedback(), ens, opt.bsde);
        const StatePaths& X = as.fbsde.path.X;

        // Each row's nodes follow the current wealth spread at that step.
        GridPolicy next = pol;
        double change = 0.0;
        int worst_row = 0;
        std::vector<double> phi(m);
        for (int i = 0; i < pol.ns(); ++i) {
            const int k = node_step[i];
            const double* xk = X.step(k);
            for (int p = 0; p < m; ++p) phi[p] = std::log(xk[p]);
            const StepRegression reg(phi.data(), m, opt.bsde.degree, opt.bsde.exec);
            const std::size_t off = static_cast<std::size_t>(k) * m;
            const PolyFit fp = reg.fit(as.adj.first.p.data() + off);
            const PolyFit fq = reg.fit(as.adj.first.q.data() + off);
            const PolyFit fP = reg.fit(as.adj.second.P.data() + off);
            const double lo = quantile(phi, 1e-3), hi = quantile(phi, 1.0 - 1e-3);
            const double pad = 0.25 * (hi - lo) + 1e-3;
            next.set_row_range(i, lo - pad, hi + pad);
            const double si = pol.s_nodes()[i], s = ens.grid.time(k);
            const double hk = st.discount(s, st.t), gam = st.recursive.gamma(s, st.t);
            for (int j = 0; j < pol.nx(); ++j) {
                double old[2];
                pol.eval(si, next.x_node(i, j), old);
                const double ph = std::clamp(std::log(next.x_node(i, j)), lo, hi), x = std::exp(ph);
                const double pv = fp(ph), qv = fq(ph), Pv = fP(ph);
                const double y = pv / hk;
                const double tc = y < 0 ? std::clamp(st.utility.inverse_neg_marginal(y) / x, 0.0, 1.0) : 1.0;
                const double lin = x * ((mu - sig * hk * gam) * pv + sig * qv);
                const double curv = Pv * x * x * sig * sig;
                double z;
                if (opt.full_hamiltonian_zeta && curv > 1e-12) {
                    double u[2];
                    pol.eval(si, x, u);
                    z = u[0] - lin / curv;
                } else {
                    z = lin > 0 ? -1.0 : 1.0;
                }
                const double tz = std::clamp(z, -1.0, 1.0);
                next.zeta(i, j) = old[0] + opt.damping * (tz - old[0]);
                next.c(i, j) = old[1] + opt.damping * (tc - old[1]);
                const double d = std::max(std::abs(next.zeta(i, j) - old[0]), std::abs(next.c(i, j) - old[1]));
                if (d > change) {
                    change = d;
                    worst_row = i;
                }
            }
        }
        next.refresh();

        // G(s,0,0;t) ≥ 0 is what licenses the P ≥ 0 curvature in the ζ step.
        const AdjointContext ctx = make_context(as.spec, as.fbsde, ens);
        double gmin = std::numeric_limits<double>::infinity();
        for (int k = 0; k < n; k += std::max(1, n / 20))
            for (int p = 0; p < std::min(m, 512); ++p)
                gmin = std::min(gmin, generator_G(ctx.at(k, p), as.adj.p(p, k), as.adj.q(p, k), 0.0, 0.0));

        res.trace.push_back(change);
        res.iterations = it;
        spdlog::info("fixed point iteration {}: sup change {:.3e} (row {}), min G(s,0,0) {:.3e}", it, change,
                     worst_row, gmin);
        pol = std::move(next);
        if (change < best) {
            best = change;
            res.policy = pol;
            res.min_G00 = gmin;
        }
        if (change < opt.tol) {
            res.converged = true;
            res.policy = pol;
            res.min_G00 = gmin;
            break;
        }
    }
    if (!res.converged) spdlog::warn("solve_policy_fixed_point: budget exhausted, returning best iterate");
    return res;
}

// ---------------------------------------------------------------------------
// Constraint

ConstraintSpec build_constraint_spec(const Setup& st, const ProblemSpec& dyn, const BoldParams& bold,
                                     const Interval& gamma) {
    if (!gamma.valid()) throw std::invalid_argument("build_constraint_spec: invalid interval");
    if (!bold.utility.u) throw std::invalid_argument("build_constraint_spec: utility not set");
    const double t = st.t, T = st.T, bb = bold.beta;
    const DiscountFn hb = bold.discount, hh = bold.discount_hat;
    const Utility v = bold.utility;

    ConstraintSpec c;
    c.gamma = gamma;
    ProblemSpec& s = c.bold;
    s = dyn;
    s.name = dyn.name + "-constraint";
    s.f = [=](double sk, double, UView, double y, double) { return -hb(sk, t) * bb * y; };
    s.grad_f = [=](double sk, double, UView, double, double) { return Vec3{0.0, -hb(sk, t) * bb, 0.0}; };
    s.hess_f = [](double, double, UView, double, double) { return Mat3{}; };
    s.h = [=](double x) { return -hh(T, t) * v.u(x); };
    s.h_x = [=](double x) { return -hh(T, t) * v.u_prime(x); };
    s.h_xx = [=](double x) { return -hh(T, t) * v.u_second(x); };
    s.linear_driver = LinearDriver{[=](double sk) { return -hb(sk, t) * bb; }, [](double) { return 0.0; }};
    return c;
}

double bold_J_closed_form(const Setup& st, const BoldParams& bold, const StatePaths& X) {
    // exp(−∫ 𝒉𝜷 ds) by composite Simpson on 2000 panels.
    const int N = 2000;
    const double a = st.t, b = st.T, h = (b - a) / N;
    double integral = 0.0;
    for (int i = 0; i <= N; ++i) {
        const double w = (i == 0 || i == N) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        integral += w * bold.discount(a + i * h, st.t) * bold.beta;
    }
    integral *= h / 3.0;
    const double fac = std::exp(-integral) * (-bold.discount_hat(st.T, st.t));
    const int n = X.grid.n_steps;
    std::vector<double> v(X.n_paths);
    for (int p = 0; p < X.n_paths; ++p) v[p] = fac * bold.utility.u(X.at(p, n));
    return mc_mean(v).mean;
}

FeedbackPolicy scale_consumption(const FeedbackPolicy& base, double a) {
    FeedbackPolicy f = base;
    f.pi = [base, a](double s, double x, double* u) {
        base.pi(s, x, u);
        u[1] *= a;
    };
    if (base.derivs)
        f.derivs = [base, a](double s, double x, double* d1, double* d2) {
            base.derivs(s, x, d1, d2);
            d1[1] *= a;
            d2[1] *= a;
        };
    return f;
}

ConstrainedReport constrained_merton_report(const Setup& st, const FeedbackPolicy& policy, const BoldParams& bold,
                                            Interval gamma, const BrownianEnsemble& ens,
                                            const ConstrainedOptions& opt) {
    ConstrainedReport rep;
    FeedbackPolicy pol = policy;

    auto bold_cost = [&](const FeedbackPolicy& fp) {
        const ProblemSpec sp = build_merton_spec(st, fp);
        const ConstraintSpec cs = build_constraint_spec(st, sp, bold, Interval{});
        const ClosedLoop cl = simulate_closed_loop(sp, fp, st.x0, ens, opt.bsde.exec);
        return evaluate_cost(cs.bold, cl.X, cl.u, ens, opt.bsde).J;
    };

    if (opt.binding) {
        const double top = bold_cost(pol).mean - opt.binding_offset;
        gamma = Interval{-std::numeric_limits<double>::infinity(), top};
        // 𝑱 rises with consumption (less terminal wealth); bisect the scale a ∈ [0, 1].
        double lo = 0.0, hi = 1.0;
        if (bold_cost(scale_consumption(policy, 0.0)).mean > top)
            throw std::runtime_error("constrained_merton_report: binding offset not reachable by scaling consumption");
        for (int it = 0; it < 50 && hi - lo > 1e-12; ++it) {
            const double mid = 0.5 * (lo + hi);
            (bold_cost(scale_consumption(policy, mid)).mean > top ? hi : lo) = mid;
        }
        rep.consumption_scale = lo;
        pol = scale_consumption(policy, lo);
        // Land exactly on max Γ: the candidate is the boundary point.
        gamma.hi = bold_cost(pol).mean;
    }
    rep.gamma = gamma;

    const ProblemSpec spec = build_merton_spec(st, pol);
    const ConstraintSpec cons = build_constraint_spec(st, spec, bold, gamma);
    const FbsdeSolution cost_side = solve_fbsde(spec, pol, st.x0, ens, opt.bsde);
    const FbsdeSolution bold_side = solve_fbsde(cons.bold, pol, st.x0, ens, opt.bsde);
    const double shift = cost_side.cost.J.mean;
    rep.bold_J = bold_side.cost.J.mean;
    rep.bold_J_se = bold_side.cost.J.std_error;

    const PairEvaluator eval = make_pair_evaluator(spec, cons, st.x0, ens, shift, opt.bsde);
    const MoveSet moves = make_spike_moves(ens.grid, spec.control_set, cost_side.path.X, opt.moves);
    std::vector<double> ladder = opt.rho_ladder.empty() ? default_rho_ladder(0.05) : opt.rho_ladder;
    CaseTwoProbe probe = opt.probe;
    if (probe.probe.empty()) probe.probe = {0.0, 1.0};
    rep.multipliers =
        multipliers_from_ladder(cost_side.path.u, eval, moves, gamma, ladder, probe, shift, opt.max_sweeps);

    const TransversalityResult tr = transversality_check(rep.multipliers.bold_psi, rep.bold_J, gamma,
                                                         default_gamma_sample(gamma, rep.bold_J), rep.bold_J_se);
    rep.multipliers.transversality_margin = tr.margin;
    rep.multipliers.transversality_ok = tr.pass;

    const AdjointContext ca = make_context(spec, cost_side, ens), cb = make_context(cons.bold, bold_side, ens);
    const Adjoints aa = solve_adjoints(ca, opt.bsde), ab = solve_adjoints(cb, opt.bsde);
    const std::vector<double> ka = kappa_process(ca, opt.bsde.exec), kb = kappa_process(cb, opt.bsde.exec);
    const CandidateBundle ba{ca, &aa, &ka}, bb{cb, &ab, &kb};
    const ProbeSet probes = default_probes(spec.control_set, ens.grid, 16, 1);
    rep.stationarity =
        constrained_stationarity_check(ba, bb, rep.multipliers.psi, rep.multipliers.bold_psi, probes);
    rep.multipliers.stationarity_min = rep.stationarity.min_mean;
    rep.multipliers.stationarity = rep.stationarity.verdict;
    return rep;
}

void write_policy_csv(const GridPolicy& pol, const std::string& path) {
    auto out = fmt::output_file(path);
    out.print("s,x,zeta,c\n");
    for (int i = 0; i < pol.ns(); ++i)
        for (int j = 0; j < pol.nx(); ++j)
            out.print("{:.17g},{:.17g},{:.17g},{:.17g}\n", pol.s_nodes()[i], pol.x_node(i, j), pol.zeta(i, j),
                      pol.c(i, j));
}

}  // namespace eqctl::merton
