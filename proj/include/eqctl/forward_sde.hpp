#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqctl/paths.hpp"
#include "eqctl/problem.hpp"

namespace eqctl {

// Time-major state values x[k * n_paths + p], k = 0..n_steps.
struct StatePaths {
    TimeGrid grid;
    int n_paths = 0;
    double x0 = 0.0;
    std::vector<double> x;
    long domain_violations = 0;

    const double* step(int k) const { return x.data() + static_cast<std::size_t>(k) * n_paths; }
    double at(int p, int k) const { return x[static_cast<std::size_t>(k) * n_paths + p]; }
};

class SimulationError : public std::runtime_error {
public:
    SimulationError(int step, int path, double value);
    int step, path;
    double value;
};

StatePaths simulate_state(const ProblemSpec& spec, const ControlPath& control, double x0,
                          const BrownianEnsemble& ens, Exec exec = Exec::kParallel);

// Candidate trajectory under a feedback policy: u_k = Π(s_k, X_k) realized on the fly.
struct ClosedLoop {
    StatePaths X;
    ControlPath u;
};

ClosedLoop simulate_closed_loop(const ProblemSpec& spec, const FeedbackPolicy& policy, double x0,
                                const BrownianEnsemble& ens, Exec exec = Exec::kParallel);

struct VariationPaths {
    std::vector<double> first;   // X1, time-major (n_steps+1) x n_paths
    std::vector<double> second;  // X2
    SpikeSpec spike;
};

VariationPaths simulate_variations(const ProblemSpec& spec, const StatePaths& base, const ControlPath& base_control,
                                   const SpikeSpec& spike, const BrownianEnsemble& ens, Exec exec = Exec::kParallel);

struct OrderFit {
    std::vector<double> eps;
    // Rows: sup_s E|X^e - X|^2k, sup_s E|X1|^2k, sup_s E|X^e - X - X1|^2k, sup_s E|X2|^2k.
    std::array<std::vector<double>, 4> sup_moment;
    std::array<double, 4> slope{};
    std::array<double, 4> expected{};
    bool skipped = false;
    bool noisy = false;  // std_error above 25% of the mean at the smallest epsilon
};

OrderFit order_fit(const ProblemSpec& spec, const FeedbackPolicy& policy, double x0, const BrownianEnsemble& ens,
                   const std::vector<double>& alt, double window_start, double eps0, int k = 1);

void write_paths_csv(const StatePaths& X, const VariationPaths* var, const std::string& path);

}  // namespace eqctl
