#include "eqctl/problem.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace eqctl {

bool Box::contains(UView u, double tol) const {
    if (static_cast<int>(u.size()) != dim()) return false;
    for (int j = 0; j < dim(); ++j)
        if (!(u[j] >= lo[j] - tol && u[j] <= hi[j] + tol)) return false;
    return true;
}

bool Box::bounded() const {
    for (int j = 0; j < dim(); ++j)
        if (!std::isfinite(lo[j]) || !std::isfinite(hi[j])) return false;
    return true;
}

FeedbackPolicy constant_policy(std::vector<double> u0) {
    FeedbackPolicy pol;
    pol.dim = static_cast<int>(u0.size());
    pol.pi = [u0](double, double, double* u) { std::copy(u0.begin(), u0.end(), u); };
    pol.derivs = [n = u0.size()](double, double, double* d1, double* d2) {
        std::fill(d1, d1 + n, 0.0);
        std::fill(d2, d2 + n, 0.0);
    };
    return pol;
}

ControlPath constant_control(const TimeGrid& grid, int n_paths, std::vector<double> u0) {
    ControlPath cp{grid, n_paths, static_cast<int>(u0.size()), {}};
    cp.values.resize(static_cast<std::size_t>(grid.n_steps) * n_paths * cp.dim);
    for (std::size_t i = 0; i < cp.values.size(); ++i) cp.values[i] = u0[i % cp.dim];
    return cp;
}

std::pair<int, int> spike_steps(const TimeGrid& grid, const SpikeSpec& spike) {
    if (!(spike.epsilon > 0.0)) throw std::invalid_argument("spike: epsilon must be positive");
    if (!(spike.epsilon < grid.t1 - grid.t0 + 1e-12))
        throw std::invalid_argument("spike: epsilon must not exceed the horizon");
    const int k0 = grid.index_of(spike.window_start);
    const int k1 = grid.index_of(spike.window_start + spike.epsilon);
    if (k1 <= k0) throw std::invalid_argument("spike: window shorter than one grid step");
    if (k1 > grid.n_steps) throw std::invalid_argument("spike: window outside the horizon");
    return {k0, k1};
}

ControlPath realize_control(const ProblemSpec& spec, const FeedbackPolicy& policy, const TimeGrid& grid,
                            int n_paths, const std::vector<double>& state, Exec exec) {
    const int d = policy.dim;
    if (d != spec.control_set.dim()) throw std::invalid_argument("realize_control: policy dimension mismatch");
    if (state.size() != static_cast<std::size_t>(grid.n_steps + 1) * n_paths)
        throw std::invalid_argument("realize_control: state paths on a different grid");
    ControlPath cp{grid, n_paths, d, {}};
    cp.values.resize(static_cast<std::size_t>(grid.n_steps) * n_paths * d);
    const Box& box = spec.control_set;
    int bad = 0;
#pragma omp parallel for schedule(static) if (exec == Exec::kParallel) reduction(+ : bad)
    for (int p = 0; p < n_paths; ++p) {
        for (int k = 0; k < grid.n_steps; ++k) {
            double* u = cp.mut(p, k);
            policy.pi(grid.time(k), state[static_cast<std::size_t>(k) * n_paths + p], u);
            for (int j = 0; j < d; ++j) {
                if (u[j] < box.lo[j] - 1e-12 || u[j] > box.hi[j] + 1e-12 || !std::isfinite(u[j])) ++bad;
                u[j] = std::clamp(u[j], box.lo[j], box.hi[j]);
            }
        }
    }
    if (bad > 0) throw std::domain_error(fmt::format("realize_control: {} policy values outside U", bad));
    return cp;
}

ControlPath apply_spike(const ControlPath& base, const SpikeSpec& spike) {
    const auto [k0, k1] = spike_steps(base.grid, spike);
    if (!spike.alt_path && static_cast<int>(spike.alt_const.size()) != base.dim)
        throw std::invalid_argument("apply_spike: alternative control has wrong dimension");
    if (!spike.mask.empty() && static_cast<int>(spike.mask.size()) != base.n_paths)
        throw std::invalid_argument("apply_spike: mask size mismatch");
    ControlPath out = base;
    for (int k = k0; k < k1; ++k)
        for (int p = 0; p < base.n_paths; ++p) {
            if (!spike.mask.empty() && !spike.mask[p]) continue;
            double* u = out.mut(p, k);
            if (spike.alt_path) {
                const UView a = spike.alt_path->at(p, k);
                std::copy(a.begin(), a.end(), u);
            } else {
                std::copy(spike.alt_const.begin(), spike.alt_const.end(), u);
            }
        }
    return out;
}

namespace {

double rel_err(double a, double fd, double floor) {
    return std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
}

}  // namespace

AssumptionReport check_assumption_A(const ProblemSpec& spec, const TimeGrid& grid, int budget, std::uint64_t seed,
                                    double x_scale) {
    AssumptionReport rep;
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> U01(0.0, 1.0);
    const int d = spec.control_set.dim();

    auto sample_x = [&](double radius) {
        double lo = spec.x_lo, hi = spec.x_hi;
        const double pad = 1e-2 * x_scale;
        if (std::isfinite(lo) && std::isfinite(hi)) {
            lo += pad * (hi - lo) / (hi - lo + x_scale);
            hi -= pad * (hi - lo) / (hi - lo + x_scale);
            return lo + (hi - lo) * U01(eng);
        }
        if (std::isfinite(lo)) {  // log-uniform on [lo + pad, lo + radius]
            return lo + pad * std::exp(std::log(radius / pad) * U01(eng));
        }
        if (std::isfinite(hi)) return hi - pad * std::exp(std::log(radius / pad) * U01(eng));
        return radius * (2.0 * U01(eng) - 1.0);
    };

    double growth[2] = {0.0, 0.0};
    double dmax[2] = {0.0, 0.0};
    long checks = 0, passed = 0;
    std::vector<double> u(d);
    for (int ring = 0; ring < 2; ++ring) {
        const double radius = (ring == 0 ? 10.0 : 100.0) * x_scale;
        for (int i = 0; i < budget; ++i) {
            const double s = grid.t0 + (grid.t1 - grid.t0) * U01(eng);
            const double x = sample_x(radius);
            for (int j = 0; j < d; ++j) {
                const double lo = std::isfinite(spec.control_set.lo[j]) ? spec.control_set.lo[j] : -1.0;
                const double hi = std::isfinite(spec.control_set.hi[j]) ? spec.control_set.hi[j] : 1.0;
                u[j] = lo + (hi - lo) * U01(eng);
            }
            const double y = 2.0 * U01(eng) - 1.0, z = 2.0 * U01(eng) - 1.0;
            const UView uv(u);
            const double bb = spec.b(s, x, uv), ss = spec.sigma(s, x, uv);
            growth[ring] = std::max(growth[ring], (std::abs(bb) + std::abs(ss)) / (1.0 + std::abs(x)));
            const Vec3 g = spec.grad_f(s, x, uv, y, z);
            dmax[ring] = std::max({dmax[ring], std::abs(spec.b_x(s, x, uv)), std::abs(spec.sigma_x(s, x, uv)),
                                   std::abs(g[0]), std::abs(g[1]), std::abs(g[2])});
            ++rep.samples;
            if (ring == 1) continue;

            const double hx = 1e-5 * std::max(x_scale, std::abs(x));
            auto check = [&](double analytic, double fd, double base) {
                const double e = rel_err(analytic, fd, 1e-7 * (1.0 + std::abs(base)));
                rep.max_fd_rel_error = std::max(rep.max_fd_rel_error, e);
                ++checks;
                if (e <= 1e-4) ++passed;
            };
            check(spec.b_x(s, x, uv), (spec.b(s, x + hx, uv) - spec.b(s, x - hx, uv)) / (2 * hx), bb);
            check(spec.b_xx(s, x, uv), (spec.b_x(s, x + hx, uv) - spec.b_x(s, x - hx, uv)) / (2 * hx),
                  spec.b_x(s, x, uv));
            check(spec.sigma_x(s, x, uv), (spec.sigma(s, x + hx, uv) - spec.sigma(s, x - hx, uv)) / (2 * hx), ss);
            check(spec.sigma_xx(s, x, uv),
                  (spec.sigma_x(s, x + hx, uv) - spec.sigma_x(s, x - hx, uv)) / (2 * hx), spec.sigma_x(s, x, uv));
            const double hy = 1e-5;
            const double fv = spec.f(s, x, uv, y, z);
            check(g[0], (spec.f(s, x + hx, uv, y, z) - spec.f(s, x - hx, uv, y, z)) / (2 * hx), fv);
            check(g[1], (spec.f(s, x, uv, y + hy, z) - spec.f(s, x, uv, y - hy, z)) / (2 * hy), fv);
            check(g[2], (spec.f(s, x, uv, y, z + hy) - spec.f(s, x, uv, y, z - hy)) / (2 * hy), fv);
            const Mat3 H = spec.hess_f(s, x, uv, y, z);
            const double steps[3] = {hx, hy, hy};
            for (int a = 0; a < 3; ++a) {
                double xp[3] = {x, y, z}, xm[3] = {x, y, z};
                xp[a] += steps[a];
                xm[a] -= steps[a];
                const Vec3 gp = spec.grad_f(s, xp[0], uv, xp[1], xp[2]);
                const Vec3 gm = spec.grad_f(s, xm[0], uv, xm[1], xm[2]);
                for (int c = 0; c < 3; ++c) check(H[c][a], (gp[c] - gm[c]) / (2 * steps[a]), g[c]);
            }
            check(spec.h_x(x), (spec.h(x + hx) - spec.h(x - hx)) / (2 * hx), spec.h(x));
            check(spec.h_xx(x), (spec.h_x(x + hx) - spec.h_x(x - hx)) / (2 * hx), spec.h_x(x));
        }
    }
    rep.growth_constant = growth[0];
    rep.growth_ok = growth[1] <= 2.0 * growth[0] + 1e-12;
    rep.derivatives_bounded = dmax[1] <= 2.0 * dmax[0] + 1e-12;
    rep.fd_pass_fraction = checks ? static_cast<double>(passed) / checks : 1.0;
    rep.fd_consistent = passed == checks;
    return rep;
}

}  // namespace eqctl
