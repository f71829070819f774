#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "eqctl/bsde.hpp"
#include "eqctl/hamiltonian.hpp"
#include "eqctl/problem.hpp"

namespace eqctl {

// Closed interval; either endpoint may be infinite.
struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    bool valid() const { return lo <= hi && !std::isnan(lo) && !std::isnan(hi); }
    bool contains(double v) const { return v >= lo && v <= hi; }
    bool interior(double v) const { return v > lo && v < hi; }
};

// meas⊗P of {a ≠ b}: dt times the number of disagreeing cells over n_paths.
double control_dist(const ControlPath& a, const ControlPath& b, double tol = 1e-12);

struct DistResult {
    double d = 0.0;
    int subgrad = 0;  // -1 left of Γ, 0 inside, +1 right of Γ
};
DistResult dist_to_interval(double v, const Interval& gamma);

// J_ρ = sqrt((J + ρ)² + d_Γ(𝑱)²).
double penalized_cost(double J, double bold_J, double rho, const Interval& gamma);

// The constraint functional 𝑱 = E 𝒀(t;t), given as a problem whose driver and
// terminal are (𝒇, 𝒉) on the same dynamics.
struct ConstraintSpec {
    ProblemSpec bold;
    Interval gamma;
};

struct CostPair {
    double J = 0.0;       // already shifted so that J(ū) = 0
    double bold_J = 0.0;
};
using PairEvaluator = std::function<CostPair(const ControlPath&)>;

// Simulates the state under an open-loop control and evaluates (J − shift, 𝑱) on
// common random numbers.
PairEvaluator make_pair_evaluator(const ProblemSpec& spec, const ConstraintSpec& cons, double x0,
                                  const BrownianEnsemble& ens, double shift, const BsdeOptions& opt = {});

// Spike-type modification: on steps [k0, k1) and the masked paths, set component
// `component` (all components when -1) to `value`.
struct EkelandMove {
    int k0 = 0, k1 = 1;
    int component = -1;
    std::vector<double> value;
    int mask = -1;  // index into the mask list, -1 for all paths
};

struct MoveSet {
    std::vector<EkelandMove> moves;
    std::vector<std::vector<std::uint8_t>> masks;
};

struct MoveOptions {
    std::vector<double> window_starts;  // times; empty: evenly spaced
    int n_windows = 4;
    std::vector<int> window_steps{1, 4};
    std::vector<int> components{-1};
    int values_per_dim = 5;
    // Adapted path events {X(s) ≥ q-quantile} and {X(s) ≤ (1−q)-quantile}.
    std::vector<double> mask_quantiles{0.9, 0.99};
};

MoveSet make_spike_moves(const TimeGrid& grid, const Box& U, const StatePaths& base, const MoveOptions& opt);

ControlPath apply_move(const ControlPath& cur, const MoveSet& set, const EkelandMove& mv);

struct EkelandResult {
    ControlPath control;
    CostPair cost;
    double J_rho = 0.0;
    double dist = 0.0;  // from the starting control
    int accepted = 0;
    bool no_improving_move = false;
};

// Accepts a move v only when J_ρ(v) + √ρ·dist(v, current) < J_ρ(current), so the
// result keeps J_ρ ≤ J_ρ(start) and dist ≤ (J_ρ(start) − J_ρ)/√ρ.
EkelandResult ekeland_search(const ControlPath& start, const PairEvaluator& eval, const MoveSet& moves, double rho,
                             const Interval& gamma, int max_sweeps = 8);

struct Rung {
    double rho = 0.0;
    CostPair cost;
    double J_rho = 0.0;
    double dist = 0.0;
    double psi = 0.0, bold_psi = 0.0;
    int case_id = 1;  // 1: J_ρ > 0; 2: J_ρ = 0
    int accepted = 0;
};

struct MultiplierReport {
    std::vector<Rung> rungs;
    double shift = 0.0;  // J(ū) subtracted from h
    double psi_raw = 0.0, bold_psi_raw = 0.0;  // ladder extrapolation before renormalization
    double psi = 0.0, bold_psi = 0.0;
    bool converged = true;
    Verdict verdict = Verdict::kPass;
    double transversality_margin = 0.0;
    bool transversality_ok = true;
    double stationarity_min = 0.0;
    Verdict stationarity = Verdict::kPass;
};

// CASE II probe: the spike of ū_ρ towards `probe` on [t, t+ε] for each ε of the ladder.
struct CaseTwoProbe {
    std::vector<double> probe;
    std::vector<double> eps{0.1, 0.05, 0.025};
};

MultiplierReport multipliers_from_ladder(const ControlPath& u_bar, const PairEvaluator& eval, const MoveSet& moves,
                                         const Interval& gamma, const std::vector<double>& rho_ladder,
                                         const CaseTwoProbe& probe, double shift, int max_sweeps = 8);

std::vector<double> default_rho_ladder(double rho0, int rungs = 5);

struct TransversalityResult {
    double margin = 0.0;
    double tol = 0.0;
    bool pass = true;
};

// max over the sample of 𝝍·(v̄ − 𝑱(ū)); pass iff ≤ 1e-6 + mc_error.
TransversalityResult transversality_check(double bold_psi, double bold_J_at_u, const Interval& gamma,
                                          std::vector<double> sample, double mc_error);
std::vector<double> default_gamma_sample(const Interval& gamma, double around, int n = 9);

struct StationarityResult {
    std::vector<ProbeResult> probes;
    double min_mean = 0.0;
    Verdict verdict = Verdict::kPass;
};

// min over probes of E[ψ κ δℋ + 𝝍 κ̃ δ𝓗] on one candidate; pass iff every probe
// ≥ −(4·std_error + rel_tol·scale), with the same floor as verify_equilibrium.
StationarityResult constrained_stationarity_check(const CandidateBundle& cost_side, const CandidateBundle& bold_side,
                                                  double psi, double bold_psi, const ProbeSet& probes,
                                                  double rel_tol = 1e-3);

void write_multiplier_csv(const MultiplierReport& rep, const std::string& path);

}  // namespace eqctl
