#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqctl/paths.hpp"

namespace eqctl {

using UView = std::span<const double>;
using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

// Product of closed intervals.
struct Box {
    std::vector<double> lo, hi;

    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(UView u, double tol = 0.0) const;
    bool bounded() const;
};

// f(s,x,u,y,z) = f(s,x,u,0,0) + beta(s)·y + gamma(s)·z with deterministic
// coefficients; enables the closed-form cost route.
struct LinearDriver {
    std::function<double(double s)> beta;
    std::function<double(double s)> gamma;
};

struct ProblemSpec {
    using Coef = std::function<double(double s, double x, UView u)>;
    using Driver = std::function<double(double s, double x, UView u, double y, double z)>;
    using Terminal = std::function<double(double x)>;

    std::string name;
    Box control_set;
    double x_lo = -std::numeric_limits<double>::infinity();  // open state domain I
    double x_hi = std::numeric_limits<double>::infinity();

    Coef b, sigma, b_x, b_xx, sigma_x, sigma_xx;
    Driver f;
    std::function<Vec3(double s, double x, UView u, double y, double z)> grad_f;  // (f_x, f_y, f_z)
    std::function<Mat3(double s, double x, UView u, double y, double z)> hess_f;  // in (x, y, z)
    Terminal h, h_x, h_xx;

    std::optional<LinearDriver> linear_driver;
    // Optional replacement for the Euler step over one interval of constant control.
    std::function<double(double s, double x, UView u, double dt, double dw)> step;
    // Regression feature of the state; identity when empty.
    std::function<double(double x)> feature;

    double regression_feature(double x) const { return feature ? feature(x) : x; }
};

struct FeedbackPolicy {
    int dim = 1;
    std::function<void(double s, double x, double* u)> pi;
    // Optional: first and second x-derivatives of every component.
    std::function<void(double s, double x, double* d1, double* d2)> derivs;
};

FeedbackPolicy constant_policy(std::vector<double> u0);

// Realized open-loop control, values[(k * n_paths + p) * dim + j].
struct ControlPath {
    TimeGrid grid;
    int n_paths = 0;
    int dim = 1;
    std::vector<double> values;

    UView at(int p, int k) const {
        return UView(values.data() + (static_cast<std::size_t>(k) * n_paths + p) * dim, dim);
    }
    double* mut(int p, int k) { return values.data() + (static_cast<std::size_t>(k) * n_paths + p) * dim; }
};

ControlPath constant_control(const TimeGrid& grid, int n_paths, std::vector<double> u0);

struct SpikeSpec {
    std::vector<double> alt_const;                 // used when alt_path is null
    std::shared_ptr<const ControlPath> alt_path;
    double window_start = 0.0;
    double epsilon = 0.0;
    // Optional restriction to a set of paths (1 = spiked); empty means all paths.
    std::vector<std::uint8_t> mask;
};

// Steps [first, last) covered by the spike window; throws when the window is
// off-grid, sub-step or outside the horizon.
std::pair<int, int> spike_steps(const TimeGrid& grid, const SpikeSpec& spike);

// values[p][k] = Π(s_k, X[p][k]); state is time-major (n_steps+1) x n_paths.
ControlPath realize_control(const ProblemSpec& spec, const FeedbackPolicy& policy, const TimeGrid& grid,
                            int n_paths, const std::vector<double>& state, Exec exec = Exec::kParallel);

ControlPath apply_spike(const ControlPath& base, const SpikeSpec& spike);

struct AssumptionReport {
    double growth_constant = 0.0;  // sup |b|+|σ| over (1+|x|) on the inner sample
    bool growth_ok = true;
    bool derivatives_bounded = true;
    double max_fd_rel_error = 0.0;
    double fd_pass_fraction = 1.0;
    bool fd_consistent = true;
    int samples = 0;
};

// Sampling diagnostic for the regularity assumption; never blocks a solve.
AssumptionReport check_assumption_A(const ProblemSpec& spec, const TimeGrid& grid, int sample_budget,
                                    std::uint64_t seed = 7, double x_scale = 1.0);

}  // namespace eqctl
