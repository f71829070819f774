#include "eqctl/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>
#include <spdlog/spdlog.h>

namespace eqctl {

double H_general(const ProblemSpec& spec, double s, double x, UView u, double y, double z, double p, double q,
                 double P, double x_bar, UView u_bar) {
    const double sig = spec.sigma(s, x, u);
    const double ds = sig - spec.sigma(s, x_bar, u_bar);
    return p * spec.b(s, x, u) + q * sig + 0.5 * P * ds * ds + spec.f(s, x, u, y, z + p * ds);
}

HamiltonianEval eval_H_general(const ProblemSpec& spec, double s, double x, UView u, double y, double z, double p,
                               double q, double P, double x_bar, UView u_bar) {
    HamiltonianEval e{H_general(spec, s, x, u, y, z, p, q, P, x_bar, u_bar), s, x, y, z, p, q, P, x_bar,
                      std::vector<double>(u.begin(), u.end()), std::vector<double>(u_bar.begin(), u_bar.end())};
    if (!std::isfinite(e.value)) throw std::runtime_error("eval_H_general: non-finite value");
    return e;
}

HamiltonianEval eval_H_first(const ProblemSpec& spec, double s, double x, UView u, double y, double z, double p,
                             double q) {
    const double v = p * spec.b(s, x, u) + q * spec.sigma(s, x, u) + spec.f(s, x, u, y, z);
    return HamiltonianEval{v, s, x, y, z, p, q, 0.0, x, std::vector<double>(u.begin(), u.end()),
                           std::vector<double>(u.begin(), u.end())};
}

std::vector<double> delta_H(const CandidateBundle& b, int k, const ProbeControl& u) {
    const AdjointContext& c = b.ctx;
    const int m = b.n_paths();
    if (k < 0 || k >= c.ens->grid.n_steps) throw std::out_of_range("delta_H: step outside [0, n_steps)");
    const double s = c.s(k);
    std::vector<double> out(m);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < m; ++p) {
        const double x = c.X->at(p, k), y = c.yz->y(p, k), z = c.yz->z(p, k);
        const UView ub = c.u->at(p, k);
        const double pp = b.adj->p(p, k), qq = b.adj->q(p, k), PP = b.adj->P(p, k);
        const double h_alt = H_general(*c.spec, s, x, u.at(p, k), y, z, pp, qq, PP, x, ub);
        const double h_bar = pp * c.spec->b(s, x, ub) + qq * c.spec->sigma(s, x, ub) + c.spec->f(s, x, ub, y, z);
        out[p] = h_alt - h_bar;
    }
    return out;
}

McStat spike_derivative_hamiltonian(const CandidateBundle& b, int k, const ProbeControl& u) {
    std::vector<double> d = delta_H(b, k, u);
    const int m = b.n_paths();
    for (int p = 0; p < m; ++p) d[p] *= (*b.kappa)[static_cast<std::size_t>(k) * m + p];
    return mc_mean(d);
}

double hamiltonian_scale(const CandidateBundle& b, int k) {
    const AdjointContext& c = b.ctx;
    const int m = b.n_paths();
    const double s = c.s(k);
    std::vector<double> v(m);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < m; ++p) {
        const double x = c.X->at(p, k);
        const UView ub = c.u->at(p, k);
        v[p] = std::abs(b.adj->p(p, k) * c.spec->b(s, x, ub)) + std::abs(b.adj->q(p, k) * c.spec->sigma(s, x, ub)) +
               std::abs(c.spec->f(s, x, ub, c.yz->y(p, k), c.yz->z(p, k)));
    }
    return block_sum(v) / m;
}

FdEstimate spike_derivative_fd(const ProblemSpec& spec, const ClosedLoop& candidate, const CostEstimate& base_cost,
                               const ProbeControl& alt, double s, const std::vector<double>& eps_ladder,
                               const BrownianEnsemble& ens, const BsdeOptions& opt) {
    const int L = static_cast<int>(eps_ladder.size());
    if (L < 1 || L > 3) throw std::invalid_argument("spike_derivative_fd: ladder needs 1 to 3 rungs");
    for (int j = 1; j < L; ++j)
        if (std::abs(eps_ladder[j] - 0.5 * eps_ladder[j - 1]) > 1e-12 * eps_ladder[0])
            throw std::invalid_argument("spike_derivative_fd: ladder must halve");
    const TimeGrid& g = ens.grid;
    const bool at_end = s >= g.t1 - 1e-12;
    const int m = ens.n_paths;
    FdEstimate est;
    est.eps = eps_ladder;
    std::shared_ptr<const ControlPath> alt_path;
    if (alt.path) alt_path = std::shared_ptr<const ControlPath>(std::shared_ptr<void>(), alt.path);
    std::vector<std::vector<double>> diffs(L, std::vector<double>(m));
    for (int j = 0; j < L; ++j) {
        const double eps = eps_ladder[j];
        SpikeSpec spike{alt.value, alt_path, at_end ? s - eps : s, eps, {}};
        if (j == 0) est.window_start = spike.window_start;
        const ControlPath spiked = apply_spike(candidate.u, spike);
        const StatePaths Xe = simulate_state(spec, spiked, candidate.X.x0, ens, opt.exec);
        const CostEstimate ce = evaluate_cost(spec, Xe, spiked, ens, opt);
        for (int p = 0; p < m; ++p) diffs[j][p] = (ce.contrib[p] - base_cost.contrib[p]) / eps;
        est.ratio.push_back(mc_mean(diffs[j]));
    }
    std::vector<double> comb(m);
    for (int p = 0; p < m; ++p) {
        if (L == 1)
            comb[p] = diffs[0][p];
        else if (L == 2)
            comb[p] = 2.0 * diffs[1][p] - diffs[0][p];
        else
            comb[p] = (8.0 * diffs[2][p] - 6.0 * diffs[1][p] + diffs[0][p]) / 3.0;
    }
    est.extrapolated = mc_mean(comb);
    if (L == 3) {
        const double d1 = est.ratio[1].mean - est.ratio[0].mean, d2 = est.ratio[2].mean - est.ratio[1].mean;
        const double e1 = std::hypot(est.ratio[1].std_error, est.ratio[0].std_error);
        const double e2 = std::hypot(est.ratio[2].std_error, est.ratio[1].std_error);
        if (d1 * d2 < 0.0 && std::abs(d1) > 2.0 * e1 && std::abs(d2) > 2.0 * e2) {
            est.monotone_warning = true;
            spdlog::warn("spike_derivative_fd: ladder values non-monotone beyond error bars at s = {}", s);
        }
    }
    return est;
}

const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::kPass: return "pass";
        case Verdict::kFail: return "fail";
        default: return "inconclusive";
    }
}

ProbeSet default_probes(const Box& U, const TimeGrid& grid, int per_dim, int n_times) {
    ProbeSet ps;
    const int n = grid.n_steps;
    n_times = std::max(1, std::min(n_times, n));
    for (int i = 0; i < n_times; ++i) {
        const int k = n_times == 1 ? 0 : static_cast<int>(std::lround(double(i) * (n - 1) / (n_times - 1)));
        if (ps.steps.empty() || ps.steps.back() != k) ps.steps.push_back(k);
    }
    const int d = U.dim();
    std::vector<std::vector<double>> axes(d);
    for (int j = 0; j < d; ++j) {
        const double lo = std::isfinite(U.lo[j]) ? U.lo[j] : -1.0, hi = std::isfinite(U.hi[j]) ? U.hi[j] : 1.0;
        for (int i = 0; i < per_dim; ++i) axes[j].push_back(per_dim == 1 ? lo : lo + (hi - lo) * i / (per_dim - 1));
    }
    std::vector<int> ix(d, 0);
    while (true) {
        std::vector<double> u(d);
        for (int j = 0; j < d; ++j) u[j] = axes[j][ix[j]];
        ps.controls.push_back(u);
        int j = d - 1;
        while (j >= 0 && ++ix[j] == per_dim) ix[j--] = 0;
        if (j < 0) break;
    }
    return ps;
}

EquilibriumReport verify_equilibrium(const CandidateBundle& b, const ProbeSet& probes, double max_violation_fraction,
                                     double rel_tol) {
    EquilibriumReport rep;
    const int m = b.n_paths();
    double worst_z = 0.0;
    bool any_negative = false;
    for (int k : probes.steps) {
        const double tol = rel_tol * hamiltonian_scale(b, k);
        for (const auto& u : probes.controls) {
            ProbeResult r;
            r.step = k;
            r.s = b.ctx.s(k);
            r.u = u;
            std::vector<double> d = delta_H(b, k, ProbeControl{u, nullptr});
            long viol = 0;
            for (int p = 0; p < m; ++p) {
                if (d[p] < -tol) ++viol;
                d[p] *= (*b.kappa)[static_cast<std::size_t>(k) * m + p];
            }
            r.stat = mc_mean(d);
            r.violation_fraction = static_cast<double>(viol) / m;
            // The cross-path std error misses the regression error shared by all
            // paths (and is exactly 0 at s = t), so the path tolerance is a floor.
            r.negative = r.stat.mean < -4.0 * r.stat.std_error - tol;
            any_negative = any_negative || r.negative;
            rep.max_violation_fraction = std::max(rep.max_violation_fraction, r.violation_fraction);
            const double z = r.stat.std_error > 0 ? r.stat.mean / r.stat.std_error
                                                   : (r.stat.mean < 0 ? -1e300 : (r.stat.mean > 0 ? 1e300 : 0.0));
            if (rep.worst < 0 || z < worst_z) {
                worst_z = z;
                rep.worst = static_cast<int>(rep.probes.size());
            }
            rep.probes.push_back(std::move(r));
        }
    }
    if (any_negative)
        rep.verdict = Verdict::kFail;
    else if (rep.max_violation_fraction >= max_violation_fraction)
        rep.verdict = Verdict::kInconclusive;
    return rep;
}

namespace {

constexpr double kInvPhi = 0.6180339887498949;

}  // namespace

std::vector<double> box_argmin(const Box& U, const std::function<double(UView)>& fn, int grid_points) {
    const int d = U.dim();
    if (!U.bounded()) throw std::invalid_argument("box_argmin: U must be bounded");
    grid_points = std::max(2, grid_points);
    std::vector<double> h(d);
    for (int j = 0; j < d; ++j) h[j] = (U.hi[j] - U.lo[j]) / (grid_points - 1);
    std::vector<int> ix(d, 0);
    std::vector<double> u(d), best(d);
    double fbest = std::numeric_limits<double>::infinity();
    while (true) {
        for (int j = 0; j < d; ++j) u[j] = ix[j] == grid_points - 1 ? U.hi[j] : U.lo[j] + ix[j] * h[j];
        const double v = fn(UView(u));
        if (v < fbest) {
            fbest = v;
            best = u;
        }
        int j = d - 1;
        while (j >= 0 && ++ix[j] == grid_points) ix[j--] = 0;
        if (j < 0) break;
    }
    if (!std::isfinite(fbest)) throw std::runtime_error("box_argmin: objective not finite on the grid");
    for (int sweep = 0; sweep < 2; ++sweep)
        for (int j = 0; j < d; ++j) {
            if (h[j] <= 0.0) continue;
            double a = std::max(U.lo[j], best[j] - h[j]), c = std::min(U.hi[j], best[j] + h[j]);
            std::vector<double> w = best;
            auto f1 = [&](double v) {
                w[j] = v;
                return fn(UView(w));
            };
            double x1 = c - kInvPhi * (c - a), x2 = a + kInvPhi * (c - a);
            double f_1 = f1(x1), f_2 = f1(x2);
            for (int it = 0; it < 80 && c - a > 1e-13 * (1.0 + std::abs(a)); ++it) {
                if (f_1 <= f_2) {
                    c = x2;
                    x2 = x1;
                    f_2 = f_1;
                    x1 = c - kInvPhi * (c - a);
                    f_1 = f1(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f_1 = f_2;
                    x2 = a + kInvPhi * (c - a);
                    f_2 = f1(x2);
                }
            }
            const double cand[3] = {a, 0.5 * (a + c), c};
            for (double v : cand) {
                const double fv = f1(v);
                if (fv < fbest) {
                    fbest = fv;
                    best[j] = v;
                }
            }
        }
    return best;
}

std::vector<double> hamiltonian_argmin(const ProblemSpec& spec, double s, double x, double y, double z, double p,
                                       double q, double P, UView u_bar, int grid_points) {
    return box_argmin(
        spec.control_set,
        [&](UView u) { return H_general(spec, s, x, u, y, z, p, q, P, x, u_bar); }, grid_points);
}

void write_probe_csv(const EquilibriumReport& rep, const std::string& path) {
    auto out = fmt::output_file(path);
    const int d = rep.probes.empty() ? 0 : static_cast<int>(rep.probes[0].u.size());
    out.print("s");
    for (int j = 0; j < d; ++j) out.print(",u{}", j);
    out.print(",mean,std_error,violation_fraction,verdict\n");
    for (const auto& r : rep.probes) {
        out.print("{:.17g}", r.s);
        for (double v : r.u) out.print(",{:.17g}", v);
        out.print(",{:.17g},{:.17g},{:.17g},{}\n", r.stat.mean, r.stat.std_error, r.violation_fraction,
                  r.negative ? "fail" : "pass");
    }
}

}  // namespace eqctl
