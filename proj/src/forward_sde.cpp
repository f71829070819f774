#include "eqctl/forward_sde.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <fmt/os.h>
#include <spdlog/spdlog.h>

namespace eqctl {

SimulationError::SimulationError(int k, int p, double v)
    : std::runtime_error(fmt::format("non-finite state at step {}, path {}: {}", k, p, v)), step(k), path(p), value(v) {}

namespace {

inline double advance(const ProblemSpec& spec, double s, double x, UView u, double dt, double dw) {
    if (spec.step) return spec.step(s, x, u, dt, dw);
    return x + spec.b(s, x, u) * dt + spec.sigma(s, x, u) * dw;
}

void check_finite_step(const std::vector<double>& x, int k, int n_paths) {
    const double* row = x.data() + static_cast<std::size_t>(k) * n_paths;
    for (int p = 0; p < n_paths; ++p)
        if (!std::isfinite(row[p])) throw SimulationError(k, p, row[p]);
}

long count_violations(const ProblemSpec& spec, const std::vector<double>& x) {
    long v = 0;
    for (double xi : x)
        if (!(xi > spec.x_lo && xi < spec.x_hi)) ++v;
    return v;
}

}  // namespace

StatePaths simulate_state(const ProblemSpec& spec, const ControlPath& control, double x0, const BrownianEnsemble& ens,
                          Exec exec) {
    if (!control.grid.same_as(ens.grid) || control.n_paths != ens.n_paths)
        throw std::invalid_argument("simulate_state: control and ensemble do not share the grid");
    const int n = ens.grid.n_steps, m = ens.n_paths;
    const double dt = ens.grid.dt();
    StatePaths X{ens.grid, m, x0, {}, 0};
    X.x.assign(static_cast<std::size_t>(n + 1) * m, x0);
    if (exec == Exec::kSerial) {
        for (int p = 0; p < m; ++p) {
            double x = x0;
            for (int k = 0; k < n; ++k) {
                x = advance(spec, ens.grid.time(k), x, control.at(p, k), dt, ens.inc(p, k));
                X.x[static_cast<std::size_t>(k + 1) * m + p] = x;
            }
        }
        for (int k = 1; k <= n; ++k) check_finite_step(X.x, k, m);
    } else {
        for (int k = 0; k < n; ++k) {
            const double s = ens.grid.time(k);
            const double* xk = X.x.data() + static_cast<std::size_t>(k) * m;
            double* xn = X.x.data() + static_cast<std::size_t>(k + 1) * m;
            const double* dw = ens.step(k);
            int bad = 0;
#pragma omp parallel for schedule(static) reduction(+ : bad)
            for (int p = 0; p < m; ++p) {
                xn[p] = advance(spec, s, xk[p], control.at(p, k), dt, dw[p]);
                if (!std::isfinite(xn[p])) ++bad;
            }
            if (bad) check_finite_step(X.x, k + 1, m);
        }
    }
    X.domain_violations = count_violations(spec, X.x);
    if (X.domain_violations) spdlog::warn("{}: {} state values left the state domain", spec.name, X.domain_violations);
    return X;
}

ClosedLoop simulate_closed_loop(const ProblemSpec& spec, const FeedbackPolicy& policy, double x0,
                                const BrownianEnsemble& ens, Exec exec) {
    const int n = ens.grid.n_steps, m = ens.n_paths, d = policy.dim;
    if (d != spec.control_set.dim()) throw std::invalid_argument("simulate_closed_loop: policy dimension mismatch");
    const double dt = ens.grid.dt();
    const Box& box = spec.control_set;
    ClosedLoop out{StatePaths{ens.grid, m, x0, {}, 0}, ControlPath{ens.grid, m, d, {}}};
    out.X.x.assign(static_cast<std::size_t>(n + 1) * m, x0);
    out.u.values.resize(static_cast<std::size_t>(n) * m * d);
    int outside = 0;
    auto one = [&](int p, int k) {
        const double s = ens.grid.time(k);
        const double x = out.X.x[static_cast<std::size_t>(k) * m + p];
        double* u = out.u.mut(p, k);
        policy.pi(s, x, u);
        int bad = 0;
        for (int j = 0; j < d; ++j) {
            if (u[j] < box.lo[j] - 1e-12 || u[j] > box.hi[j] + 1e-12 || !std::isfinite(u[j])) ++bad;
            u[j] = std::clamp(u[j], box.lo[j], box.hi[j]);
        }
        out.X.x[static_cast<std::size_t>(k + 1) * m + p] = advance(spec, s, x, UView(u, d), dt, ens.inc(p, k));
        return bad;
    };
    if (exec == Exec::kSerial) {
        for (int p = 0; p < m; ++p)
            for (int k = 0; k < n; ++k) outside += one(p, k);
        for (int k = 1; k <= n; ++k) check_finite_step(out.X.x, k, m);
    } else {
        for (int k = 0; k < n; ++k) {
            int bad = 0, nonfinite = 0;
#pragma omp parallel for schedule(static) reduction(+ : bad, nonfinite)
            for (int p = 0; p < m; ++p) {
                bad += one(p, k);
                if (!std::isfinite(out.X.x[static_cast<std::size_t>(k + 1) * m + p])) ++nonfinite;
            }
            outside += bad;
            if (nonfinite) check_finite_step(out.X.x, k + 1, m);
        }
    }
    if (outside) throw std::domain_error(fmt::format("policy returned {} values outside U", outside));
    out.X.domain_violations = count_violations(spec, out.X.x);
    if (out.X.domain_violations)
        spdlog::warn("{}: {} state values left the state domain", spec.name, out.X.domain_violations);
    return out;
}

VariationPaths simulate_variations(const ProblemSpec& spec, const StatePaths& base, const ControlPath& base_control,
                                   const SpikeSpec& spike, const BrownianEnsemble& ens, Exec exec) {
    const int n = ens.grid.n_steps, m = ens.n_paths;
    const double dt = ens.grid.dt();
    const auto [k0, k1] = spike_steps(ens.grid, spike);
    VariationPaths v{{}, {}, spike};
    v.first.assign(static_cast<std::size_t>(n + 1) * m, 0.0);
    v.second.assign(static_cast<std::size_t>(n + 1) * m, 0.0);
    const int d = base_control.dim;
    auto one = [&](int p, int k) {
        const double s = ens.grid.time(k);
        const double x = base.at(p, k);
        const UView ub = base_control.at(p, k);
        const std::size_t i = static_cast<std::size_t>(k) * m + p, j = i + m;
        const double x1 = v.first[i], x2 = v.second[i];
        const double bx = spec.b_x(s, x, ub), bxx = spec.b_xx(s, x, ub);
        const double sx = spec.sigma_x(s, x, ub), sxx = spec.sigma_xx(s, x, ub);
        double db = 0.0, ds = 0.0, dsx = 0.0;
        const bool in = k >= k0 && k < k1 && (spike.mask.empty() || spike.mask[p]);
        if (in) {
            const UView ua = spike.alt_path ? spike.alt_path->at(p, k) : UView(spike.alt_const.data(), d);
            db = spec.b(s, x, ua) - spec.b(s, x, ub);
            ds = spec.sigma(s, x, ua) - spec.sigma(s, x, ub);
            dsx = spec.sigma_x(s, x, ua) - sx;
        }
        const double dw = ens.inc(p, k);
        v.first[j] = x1 + bx * x1 * dt + (sx * x1 + ds) * dw;
        v.second[j] = x2 + (bx * x2 + db + 0.5 * bxx * x1 * x1) * dt + (sx * x2 + dsx * x1 + 0.5 * sxx * x1 * x1) * dw;
    };
    if (exec == Exec::kSerial) {
        for (int p = 0; p < m; ++p)
            for (int k = 0; k < n; ++k) one(p, k);
    } else {
        for (int k = 0; k < n; ++k) {
#pragma omp parallel for schedule(static)
            for (int p = 0; p < m; ++p) one(p, k);
        }
    }
    for (int k = 1; k <= n; ++k) {
        check_finite_step(v.first, k, m);
        check_finite_step(v.second, k, m);
    }
    return v;
}

namespace {

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (int i = 0; i < n; ++i) {
        const double a = std::log(x[i]) - mx;
        sxy += a * (std::log(y[i]) - my);
        sxx += a * a;
    }
    return sxy / sxx;
}

}  // namespace

OrderFit order_fit(const ProblemSpec& spec, const FeedbackPolicy& policy, double x0, const BrownianEnsemble& ens,
                   const std::vector<double>& alt, double window_start, double eps0, int kpow) {
    const TimeGrid& g = ens.grid;
    if (!(eps0 < (g.t1 - g.t0) / 4.0)) throw std::invalid_argument("order_fit: need eps0 < (T - t)/4");
    const int n = g.n_steps, m = ens.n_paths;
    OrderFit fit;
    fit.expected = {double(kpow), double(kpow), 2.0 * kpow, 2.0 * kpow};
    const ClosedLoop cand = simulate_closed_loop(spec, policy, x0, ens);

    bool all_same = true;
    {
        SpikeSpec probe{alt, nullptr, window_start, eps0, {}};
        const auto [k0, k1] = spike_steps(g, probe);
        for (int k = k0; k < k1 && all_same; ++k)
            for (int p = 0; p < m && all_same; ++p) {
                const UView u = cand.u.at(p, k);
                for (int j = 0; j < cand.u.dim; ++j)
                    if (u[j] != alt[j]) all_same = false;
            }
    }
    std::vector<double> last_se(4, 0.0), last_mean(4, 0.0);
    for (int j = 0; j < 4; ++j) {
        const double eps = eps0 / std::pow(2.0, j);
        fit.eps.push_back(eps);
        SpikeSpec spike{alt, nullptr, window_start, eps, {}};
        const ControlPath spiked = apply_spike(cand.u, spike);
        const StatePaths Xe = simulate_state(spec, spiked, x0, ens);
        const VariationPaths var = simulate_variations(spec, cand.X, cand.u, spike, ens);
        std::array<double, 4> sup{0, 0, 0, 0};
        std::array<int, 4> arg{0, 0, 0, 0};
        std::vector<double> buf(m);
        for (int k = 0; k <= n; ++k) {
            const std::size_t o = static_cast<std::size_t>(k) * m;
            for (int q = 0; q < 4; ++q) {
                for (int p = 0; p < m; ++p) {
                    const double dx = Xe.x[o + p] - cand.X.x[o + p];
                    double val = 0.0;
                    switch (q) {
                        case 0: val = dx; break;
                        case 1: val = var.first[o + p]; break;
                        case 2: val = dx - var.first[o + p]; break;
                        default: val = var.second[o + p]; break;
                    }
                    buf[p] = std::pow(std::abs(val), 2 * kpow);
                }
                const double mean = block_sum(buf) / m;
                if (mean > sup[q]) {
                    sup[q] = mean;
                    arg[q] = k;
                }
            }
        }
        for (int q = 0; q < 4; ++q) fit.sup_moment[q].push_back(sup[q]);
        if (j == 3) {
            for (int q = 0; q < 4; ++q) {
                const std::size_t o = static_cast<std::size_t>(arg[q]) * m;
                for (int p = 0; p < m; ++p) {
                    const double dx = Xe.x[o + p] - cand.X.x[o + p];
                    const double val = q == 0 ? dx : q == 1 ? var.first[o + p] : q == 2 ? dx - var.first[o + p]
                                                                                         : var.second[o + p];
                    buf[p] = std::pow(std::abs(val), 2 * kpow);
                }
                const McStat st = m >= 2 ? mc_mean(buf) : McStat{buf[0], 0.0, 1};
                last_mean[q] = st.mean;
                last_se[q] = st.std_error;
            }
        }
    }
    if (all_same) {
        fit.skipped = true;
        return fit;
    }
    for (int q = 0; q < 4; ++q) {
        bool positive = true;
        for (double v : fit.sup_moment[q]) positive = positive && v > 0.0;
        fit.slope[q] = positive ? ls_slope(fit.eps, fit.sup_moment[q]) : 0.0;
        if (last_se[q] > 0.25 * last_mean[q]) fit.noisy = true;
    }
    if (fit.noisy) spdlog::warn("order_fit: Monte Carlo noise dominates at the smallest epsilon");
    return fit;
}

void write_paths_csv(const StatePaths& X, const VariationPaths* var, const std::string& path) {
    auto out = fmt::output_file(path);
    out.print("{}", var ? "path_id,step,X,X1,X2\n" : "path_id,step,X\n");
    const int m = X.n_paths;
    for (int p = 0; p < m; ++p)
        for (int k = 0; k <= X.grid.n_steps; ++k) {
            const std::size_t i = static_cast<std::size_t>(k) * m + p;
            if (var)
                out.print("{},{},{:.17g},{:.17g},{:.17g}\n", p, k, X.x[i], var->first[i], var->second[i]);
            else
                out.print("{},{},{:.17g}\n", p, k, X.x[i]);
        }
}

}  // namespace eqctl
