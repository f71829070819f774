#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "eqctl/forward_sde.hpp"
#include "eqctl/paths.hpp"
#include "eqctl/problem.hpp"

namespace eqctl {

// Y time-major (n_steps+1) x n_paths, Z time-major n_steps x n_paths.
struct BsdePair {
    TimeGrid grid;
    int n_paths = 0;
    std::vector<double> Y;
    std::vector<double> Z;
    McStat y_at_t;  // fitted Y(t;t); std_error from the step-0 regression targets

    double y(int p, int k) const { return Y[static_cast<std::size_t>(k) * n_paths + p]; }
    double z(int p, int k) const { return Z[static_cast<std::size_t>(k) * n_paths + p]; }
};

// Linear solver targets: one-step (smooth fitted Ξ_{k+1} times the one-step
// factor, low variance) or pathwise (the full integrating-factor sum, no
// accumulated projection bias but noisy slopes where X has barely spread).
enum class LinearScheme { kOneStep, kPathwise };

struct BsdeOptions {
    int degree = 3;
    int picard = 1;             // sweeps for the implicit Y-dependence
    double picard_tol = 0.0;    // > 0: iterate to this sup-change, at most 10 sweeps
    Exec exec = Exec::kParallel;
    LinearScheme linear_scheme = LinearScheme::kOneStep;
};

// dXi = -(alpha + beta Xi + gamma Theta) ds + Theta dW, Xi(T) = xi.
// Coefficients are read per (step, path) so adapted processes are allowed.
struct LinearBsdeSpec {
    std::function<double(int k, int p)> alpha;
    std::function<double(int k, int p)> beta;
    std::function<double(int k, int p)> gamma;
    std::function<double(int p)> xi;
    // Optional combined (alpha, beta, gamma) callback; replaces the three above when set.
    std::function<std::array<double, 3>(int k, int p)> coefs;
    // Time-major regression feature (n_steps+1) x n_paths; the Brownian level when null.
    const std::vector<double>* feature = nullptr;
};

// η(s) = exp{∫(β − γ²/2) dr + ∫γ dW}, left-endpoint quadrature, time-major.
std::vector<double> eta_process(const std::function<double(int k, int p)>& beta,
                                const std::function<double(int k, int p)>& gamma, const BrownianEnsemble& ens,
                                Exec exec = Exec::kParallel);

BsdePair solve_linear_bsde(const LinearBsdeSpec& spec, const BrownianEnsemble& ens, const BsdeOptions& opt = {});

BsdePair solve_bsde_regression(const ProblemSpec& spec, const StatePaths& X, const ControlPath& u,
                               const BrownianEnsemble& ens, const BsdeOptions& opt = {});

struct CostEstimate {
    McStat J;
    std::vector<double> contrib;  // per-path contributions with mean J (common random numbers)
    bool closed_form = false;
};

// Integrating-factor route when spec.linear_driver is set, regression otherwise.
CostEstimate evaluate_cost(const ProblemSpec& spec, const StatePaths& X, const ControlPath& u,
                           const BrownianEnsemble& ens, const BsdeOptions& opt = {});

struct FbsdeSolution {
    ClosedLoop path;
    BsdePair yz;
    CostEstimate cost;
};

FbsdeSolution solve_fbsde(const ProblemSpec& spec, const FeedbackPolicy& policy, double x0,
                          const BrownianEnsemble& ens, const BsdeOptions& opt = {});

struct ContinuityGap {
    std::vector<double> delta;
    std::vector<double> xi_gap;   // E|xi - xi^|^2
    std::vector<double> sol_gap;  // E sup|Xi - Xi^|^2 + E ∫|Theta - Theta^|^2
    double K = 0.0;               // max sol_gap / xi_gap
    double slope = 0.0;           // log-log slope of sol_gap against xi_gap
};

// Perturbs the terminal value to xi + delta * direction(p) along the ladder.
ContinuityGap continuity_gap_check(const LinearBsdeSpec& spec, const std::function<double(int p)>& direction,
                                   const std::vector<double>& deltas, const BrownianEnsemble& ens,
                                   const BsdeOptions& opt = {});

void write_bsde_csv(const BsdePair& yz, const std::string& path);

}  // namespace eqctl
