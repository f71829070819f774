#include "eqctl/constrained.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>
#include <spdlog/spdlog.h>

#include "eqctl/forward_sde.hpp"

namespace eqctl {

double control_dist(const ControlPath& a, const ControlPath& b, double tol) {
    if (!a.grid.same_as(b.grid) || a.n_paths != b.n_paths || a.dim != b.dim)
        throw std::invalid_argument("control_dist: shape mismatch");
    const std::size_t cells = static_cast<std::size_t>(a.grid.n_steps) * a.n_paths;
    long diff = 0;
    for (std::size_t c = 0; c < cells; ++c)
        for (int j = 0; j < a.dim; ++j)
            if (std::abs(a.values[c * a.dim + j] - b.values[c * a.dim + j]) > tol) {
                ++diff;
                break;
            }
    return a.grid.dt() * static_cast<double>(diff) / a.n_paths;
}

DistResult dist_to_interval(double v, const Interval& g) {
    if (v < g.lo) return {g.lo - v, -1};
    if (v > g.hi) return {v - g.hi, +1};
    return {0.0, 0};
}

double penalized_cost(double J, double bold_J, double rho, const Interval& gamma) {
    if (!(rho > 0.0)) throw std::invalid_argument("penalized_cost: rho must be positive");
    const double d = dist_to_interval(bold_J, gamma).d;
    return std::hypot(J + rho, d);
}

PairEvaluator make_pair_evaluator(const ProblemSpec& spec, const ConstraintSpec& cons, double x0,
                                  const BrownianEnsemble& ens, double shift, const BsdeOptions& opt) {
    return [&spec, &cons, x0, &ens, shift, opt](const ControlPath& u) {
        const StatePaths X = simulate_state(spec, u, x0, ens, opt.exec);
        CostPair c;
        c.J = evaluate_cost(spec, X, u, ens, opt).J.mean - shift;
        c.bold_J = evaluate_cost(cons.bold, X, u, ens, opt).J.mean;
        return c;
    };
}

MoveSet make_spike_moves(const TimeGrid& grid, const Box& U, const StatePaths& base, const MoveOptions& opt) {
    if (!U.bounded()) throw std::invalid_argument("make_spike_moves: U must be bounded");
    MoveSet set;
    const int n = grid.n_steps, m = base.n_paths, d = U.dim();
    std::vector<int> starts;
    if (opt.window_starts.empty()) {
        for (int i = 0; i < opt.n_windows; ++i) starts.push_back(static_cast<int>(std::lround(double(i) * n / opt.n_windows)));
    } else {
        for (double s : opt.window_starts) starts.push_back(grid.index_of(s));
    }
    std::vector<std::vector<double>> axes(d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < opt.values_per_dim; ++i)
            axes[j].push_back(opt.values_per_dim == 1 ? U.lo[j]
                                                      : U.lo[j] + (U.hi[j] - U.lo[j]) * i / (opt.values_per_dim - 1));
    // Value lists per component choice.
    std::vector<std::pair<int, std::vector<double>>> values;
    for (int comp : opt.components) {
        if (comp >= 0) {
            for (double v : axes[comp]) values.push_back({comp, {v}});
            continue;
        }
        std::vector<int> ix(d, 0);
        while (true) {
            std::vector<double> u(d);
            for (int j = 0; j < d; ++j) u[j] = axes[j][ix[j]];
            values.push_back({-1, u});
            int j = d - 1;
            while (j >= 0 && ++ix[j] == opt.values_per_dim) ix[j--] = 0;
            if (j < 0) break;
        }
    }
    for (int k0 : starts) {
        std::vector<int> masks{-1};
        std::vector<double> xs(base.step(k0), base.step(k0) + m);
        for (double q : opt.mask_quantiles) {
            for (int side = 0; side < 2; ++side) {
                const double qq = side == 0 ? q : 1.0 - q;
                std::vector<double> tmp = xs;
                const auto pos = static_cast<std::size_t>(std::clamp(qq, 0.0, 1.0) * (m - 1));
                std::nth_element(tmp.begin(), tmp.begin() + pos, tmp.end());
                const double thr = tmp[pos];
                std::vector<std::uint8_t> mask(m, 0);
                long count = 0;
                for (int p = 0; p < m; ++p) {
                    mask[p] = side == 0 ? xs[p] >= thr : xs[p] <= thr;
                    count += mask[p];
                }
                if (count == 0 || count == m) continue;
                masks.push_back(static_cast<int>(set.masks.size()));
                set.masks.push_back(std::move(mask));
            }
        }
        for (int len : opt.window_steps) {
            const int k1 = std::min(n, k0 + len);
            if (k1 <= k0) continue;
            for (int mk : masks)
                for (const auto& [comp, val] : values) set.moves.push_back(EkelandMove{k0, k1, comp, val, mk});
        }
    }
    return set;
}

ControlPath apply_move(const ControlPath& cur, const MoveSet& set, const EkelandMove& mv) {
    ControlPath out = cur;
    const std::vector<std::uint8_t>* mask = mv.mask >= 0 ? &set.masks.at(mv.mask) : nullptr;
    for (int k = mv.k0; k < mv.k1; ++k)
        for (int p = 0; p < cur.n_paths; ++p) {
            if (mask && !(*mask)[p]) continue;
            double* u = out.mut(p, k);
            if (mv.component < 0)
                std::copy(mv.value.begin(), mv.value.end(), u);
            else
                u[mv.component] = mv.value[0];
        }
    return out;
}

EkelandResult ekeland_search(const ControlPath& start, const PairEvaluator& eval, const MoveSet& moves, double rho,
                             const Interval& gamma, int max_sweeps) {
    EkelandResult res{start, eval(start), 0.0, 0.0, 0, false};
    res.J_rho = penalized_cost(res.cost.J, res.cost.bold_J, rho, gamma);
    const double sr = std::sqrt(rho);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double best_score = res.J_rho;
        int best = -1;
        CostPair best_cost;
        for (std::size_t i = 0; i < moves.moves.size(); ++i) {
            const ControlPath v = apply_move(res.control, moves, moves.moves[i]);
            const double step = control_dist(v, res.control);
            if (step == 0.0) continue;
            const CostPair c = eval(v);
            const double score = penalized_cost(c.J, c.bold_J, rho, gamma) + sr * step;
            if (score < best_score) {
                best_score = score;
                best = static_cast<int>(i);
                best_cost = c;
            }
        }
        if (best < 0) break;
        res.control = apply_move(res.control, moves, moves.moves[best]);
        res.cost = best_cost;
        res.J_rho = penalized_cost(best_cost.J, best_cost.bold_J, rho, gamma);
        ++res.accepted;
    }
    res.no_improving_move = res.accepted == 0;
    res.dist = control_dist(start, res.control);
    return res;
}

std::vector<double> default_rho_ladder(double rho0, int rungs) {
    std::vector<double> r;
    for (int k = 0; k < rungs; ++k) r.push_back(rho0 * std::pow(4.0, -k));
    return r;
}

namespace {

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

MultiplierReport multipliers_from_ladder(const ControlPath& u_bar, const PairEvaluator& eval, const MoveSet& moves,
                                         const Interval& gamma, const std::vector<double>& rho_ladder,
                                         const CaseTwoProbe& probe, double shift, int max_sweeps) {
    if (!gamma.valid()) throw std::invalid_argument("multipliers_from_ladder: invalid interval");
    MultiplierReport rep;
    rep.shift = shift;
    for (std::size_t i = 1; i < rho_ladder.size(); ++i)
        if (!(rho_ladder[i] < rho_ladder[i - 1])) throw std::invalid_argument("rho ladder must decrease");
    for (double rho : rho_ladder) {
        // Every rung starts from ū so that the Ekeland bounds refer to ū itself.
        const EkelandResult ek = ekeland_search(u_bar, eval, moves, rho, gamma, max_sweeps);
        Rung r{rho, ek.cost, ek.J_rho, ek.dist, 0.0, 0.0, 1, ek.accepted};
        const DistResult dr = dist_to_interval(ek.cost.bold_J, gamma);
        if (ek.J_rho > 1e-14) {
            r.psi = (ek.cost.J + rho) / ek.J_rho;
            r.bold_psi = dr.d * dr.subgrad / ek.J_rho;
        } else {
            r.case_id = 2;
            const TimeGrid& g = u_bar.grid;
            for (double eps : probe.eps) {
                const int k1 = g.index_of(g.t0 + eps);
                EkelandMove mv{0, k1, -1, probe.probe, -1};
                const CostPair c = eval(apply_move(ek.control, moves, mv));
                const double a = c.J + rho;
                const DistResult de = dist_to_interval(c.bold_J, gamma);
                if (gamma.interior(ek.cost.bold_J) || de.d == 0.0) {
                    r.psi = sgn(a);
                    r.bold_psi = 0.0;
                } else if (a == 0.0) {
                    r.psi = 0.0;
                    r.bold_psi = de.subgrad;
                } else {
                    r.psi = sgn(a) / std::sqrt(1.0 + de.d * de.d / (a * a));
                    r.bold_psi = de.subgrad / std::sqrt(a * a / (de.d * de.d) + 1.0);
                }
            }
        }
        rep.rungs.push_back(r);
    }
    const std::size_t L = rep.rungs.size();
    if (L == 0) throw std::invalid_argument("multipliers_from_ladder: empty ladder");
    if (L == 1) {
        rep.psi_raw = rep.rungs[0].psi;
        rep.bold_psi_raw = rep.rungs[0].bold_psi;
    } else {
        const Rung& a = rep.rungs[L - 2];
        const Rung& b = rep.rungs[L - 1];
        const double w = b.rho / (a.rho - b.rho);  // linear extrapolation to ρ = 0
        rep.psi_raw = b.psi + (b.psi - a.psi) * w;
        rep.bold_psi_raw = b.bold_psi + (b.bold_psi - a.bold_psi) * w;
        if (std::abs(b.psi - a.psi) > 0.1 || std::abs(b.bold_psi - a.bold_psi) > 0.1) {
            rep.converged = false;
            rep.verdict = Verdict::kInconclusive;
            spdlog::warn("multipliers_from_ladder: successive rungs differ by more than 0.1");
        }
    }
    const double r = std::hypot(rep.psi_raw, rep.bold_psi_raw);
    if (r > 0.0) {
        rep.psi = rep.psi_raw / r;
        rep.bold_psi = rep.bold_psi_raw / r;
    } else {
        rep.psi = 1.0;
        rep.bold_psi = 0.0;
        rep.converged = false;
        rep.verdict = Verdict::kInconclusive;
    }
    return rep;
}

std::vector<double> default_gamma_sample(const Interval& g, double around, int n) {
    std::vector<double> s;
    const double scale = 1.0 + std::abs(around);
    const double lo = std::isfinite(g.lo) ? g.lo : std::min(around, std::isfinite(g.hi) ? g.hi : around) - 100.0 * scale;
    const double hi = std::isfinite(g.hi) ? g.hi : std::max(around, std::isfinite(g.lo) ? g.lo : around) + 100.0 * scale;
    for (int i = 0; i < n; ++i) s.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
    s.front() = lo;
    s.back() = hi;
    return s;
}

TransversalityResult transversality_check(double bold_psi, double bold_J_at_u, const Interval& gamma,
                                          std::vector<double> sample, double mc_error) {
    if (std::isfinite(gamma.lo)) sample.push_back(gamma.lo);
    if (std::isfinite(gamma.hi)) sample.push_back(gamma.hi);
    TransversalityResult r;
    r.tol = 1e-6 + mc_error;
    r.margin = -std::numeric_limits<double>::infinity();
    for (double v : sample) {
        if (!gamma.contains(v)) continue;
        r.margin = std::max(r.margin, bold_psi * (v - bold_J_at_u));
    }
    if (bold_psi == 0.0) r.margin = 0.0;
    r.pass = r.margin <= r.tol;
    return r;
}

StationarityResult constrained_stationarity_check(const CandidateBundle& a, const CandidateBundle& b, double psi,
                                                  double bold_psi, const ProbeSet& probes, double rel_tol) {
    StationarityResult res;
    const int m = a.n_paths();
    res.min_mean = std::numeric_limits<double>::infinity();
    for (int k : probes.steps) {
        const double tol =
            rel_tol * (std::abs(psi) * hamiltonian_scale(a, k) + std::abs(bold_psi) * hamiltonian_scale(b, k));
        for (const auto& u : probes.controls) {
            const ProbeControl pc{u, nullptr};
            const std::vector<double> d1 = delta_H(a, k, pc);
            const std::vector<double> d2 = delta_H(b, k, pc);
            std::vector<double> v(m);
            for (int p = 0; p < m; ++p) {
                const std::size_t i = static_cast<std::size_t>(k) * m + p;
                v[p] = psi * (*a.kappa)[i] * d1[p] + bold_psi * (*b.kappa)[i] * d2[p];
            }
            ProbeResult r;
            r.step = k;
            r.s = a.ctx.s(k);
            r.u = u;
            r.stat = mc_mean(v);
            r.negative = r.stat.mean < -4.0 * r.stat.std_error - tol;
            res.min_mean = std::min(res.min_mean, r.stat.mean);
            if (r.negative) res.verdict = Verdict::kFail;
            res.probes.push_back(std::move(r));
        }
    }
    return res;
}

void write_multiplier_csv(const MultiplierReport& rep, const std::string& path) {
    auto out = fmt::output_file(path);
    out.print("rho,J,bold_J,J_rho,dist,psi_rho,bold_psi_rho\n");
    for (const auto& r : rep.rungs)
        out.print("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.rho, r.cost.J, r.cost.bold_J, r.J_rho,
                  r.dist, r.psi, r.bold_psi);
    out.print("# psi={:.17g} bold_psi={:.17g} converged={} transversality={} stationarity={}\n", rep.psi,
              rep.bold_psi, rep.converged, rep.transversality_ok ? "pass" : "fail", verdict_name(rep.stationarity));
}

}  // namespace eqctl
