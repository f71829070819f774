#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "eqctl/adjoint.hpp"
#include "eqctl/bsde.hpp"
#include "eqctl/constrained.hpp"
#include "eqctl/forward_sde.hpp"
#include "eqctl/hamiltonian.hpp"
#include "eqctl/problem.hpp"

namespace eqctl::merton {

struct MarketParams {
    double r = 0.03;
    double mean_return = 0.08;
    double sigma = 0.2;

    double mu() const { return mean_return - r; }
    void validate() const;
};

struct Utility {
    std::function<double(double)> u, u_prime, u_second;
    std::function<double(double)> inverse_neg_marginal;  // Υ = (−υ′)⁻¹ on y < 0
    double lambda = 0.5;
    double weight = 1.0;
};

// υ(x) = w·x^λ/λ.
Utility crra_utility(double lambda, double weight = 1.0);

enum class DiscountFamily { kExponential, kHyperbolic, kHyperbolicPower, kCustom };

struct DiscountFn {
    DiscountFamily family = DiscountFamily::kExponential;
    double delta = 0.0, K = 0.0, k = 1.0;
    std::function<double(double lag)> custom;

    double operator()(double s, double t) const;  // ℏ(s; t) = ℏ(s − t)
    std::string name() const;
};

DiscountFn exponential_discount(double delta);
DiscountFn hyperbolic_discount(double K);
DiscountFn hyperbolic_power_discount(double K, double k);

// ℏ(s−t)ℏ(τ−s) − ℏ(τ−t) at each triple; returns the entry of largest magnitude.
double check_time_consistency(const DiscountFn& h, const std::vector<std::array<double, 3>>& triples);

struct RecursiveSpec {
    std::function<double(double s, double t)> beta;
    std::function<double(double s, double t)> gamma;
};
RecursiveSpec constant_recursive(double beta, double gamma);

struct Setup {
    MarketParams market;
    Utility utility;
    Utility bequest;
    DiscountFn discount;
    DiscountFn discount_hat;
    RecursiveSpec recursive;
    double t = 0.0;
    double T = 1.0;
    double x0 = 1.0;
};

// Policy (ζ, c) on an (s, x) node grid: linear in s, natural cubic spline in log x,
// constant beyond the end nodes, clamped to [−1,1] × [0,1]. Each s-row has its
// own uniform log-x node range so the nodes can follow the wealth distribution.
class GridPolicy {
public:
    GridPolicy(std::vector<double> s_nodes, int nx, double log_lo, double log_hi);

    int ns() const { return static_cast<int>(s_.size()); }
    int nx() const { return nx_; }
    const std::vector<double>& s_nodes() const { return s_; }
    double x_node(int i, int j) const;
    void set_row_range(int i, double log_lo, double log_hi);
    double& zeta(int i, int j) { return zeta_[i * nx_ + j]; }
    double& c(int i, int j) { return c_[i * nx_ + j]; }
    double zeta(int i, int j) const { return zeta_[i * nx_ + j]; }
    double c(int i, int j) const { return c_[i * nx_ + j]; }
    void fill(double zeta, double c);
    // Recompute spline moments after node values change.
    void refresh();

    void eval(double s, double x, double* u, double* d1 = nullptr, double* d2 = nullptr) const;
    FeedbackPolicy feedback() const;  // holds a copy of this grid

private:
    void eval_row(int i, double xi, double out[2][3], bool* inside) const;

    std::vector<double> s_;
    int nx_;
    std::vector<double> lo_, hi_;
    std::vector<double> zeta_, c_, mz_, mc_;
};

GridPolicy make_grid_policy(const Setup& st, int ns_cells, int nx_nodes, double log_halfwidth = 1.5);

enum class DerivMode { kOpenLoop, kFeedback };

// b = x(r + μζ − c), σ = σxζ, f = −ℏ(s;t)[υ(cx) + βy + γz], h = −ℏ̂(T;t)υ̂(x).
// Open-loop derivatives hold u fixed; feedback derivatives compose with the
// policy's x-derivatives.
ProblemSpec build_merton_spec(const Setup& st, const FeedbackPolicy& policy, DerivMode mode = DerivMode::kOpenLoop);

// Drift of the p-equation written out term by term (argument order as generator_g).
double expanded_g(const Setup& st, const FeedbackPolicy& policy, double s, double x, double p, double q);
// G(s,0,0;t) written out.
double expanded_G00(const Setup& st, const FeedbackPolicy& policy, double s, double x, double p, double q);
// δℋ(t;t,(ζ,c)) written out (s = t, x̄ = x).
double expanded_delta_H(const Setup& st, double x, const std::array<double, 2>& u, const std::array<double, 2>& u_bar,
                        double y, double z, double p, double q, double P);

struct AdjointSolve {
    ProblemSpec spec;
    FbsdeSolution fbsde;
    Adjoints adj;
    std::vector<double> kappa;
    double expanded_drift_gap = 0.0;  // max |expanded − generator_g| on the feedback context
};

AdjointSolve merton_adjoint_solve(const Setup& st, const FeedbackPolicy& policy, const BrownianEnsemble& ens,
                                  const BsdeOptions& opt = {}, DerivMode mode = DerivMode::kOpenLoop);

// Bundle pointing into `a`; `a` must stay in place while the bundle is used.
CandidateBundle make_bundle(const AdjointSolve& a, const BrownianEnsemble& ens);

struct ConditionReport {
    std::vector<double> r1, r2;  // per step
    double max_r1 = 0.0, max_r2 = 0.0;
    bool pass = false;
};

// r1 = E|(μ − σℏγ)p + σq| / (μ E|p|), r2 = E|p + ℏυ′(cX)| / E|p| per step.
ConditionReport equilibrium_conditions_check(const Setup& st, const StatePaths& X, const ControlPath& u,
                                             const Adjoints& adj, double tol = 1e-2);

struct FixedPointOptions {
    int ns_cells = 200;
    int nx_nodes = 16;
    double damping = 0.5;
    double tol = 1e-3;
    int max_iter = 40;
    double zeta0 = 0.5;
    double c0 = 0.2;
    // ζ by the argmin of the full ℋ (quadratic through P); the first-order H is
    // linear in ζ, so its argmin sits on the boundary of [−1,1].
    bool full_hamiltonian_zeta = true;
    // The per-row refit of p, q, P reuses bsde.degree so the update sees the
    // same conditional expectations as the adjoints. Cubic fits chase noise
    // where the wealth spread is small and stall the iteration.
    BsdeOptions bsde = [] {
        BsdeOptions b;
        b.degree = 2;
        return b;
    }();
};

struct FixedPointResult {
    GridPolicy policy;
    std::vector<double> trace;  // sup change per iteration
    bool converged = false;
    int iterations = 0;
    double min_G00 = 0.0;  // min over sampled cells of G(s,0,0;t) at the last iterate
};

FixedPointResult solve_policy_fixed_point(const Setup& st, const BrownianEnsemble& ens, const FixedPointOptions& opt);

struct BoldParams {
    double beta = 0.1;
    DiscountFn discount;
    DiscountFn discount_hat;
    Utility utility;
};

// 𝒇 = −𝒉(s;t)𝜷 y, 𝒉-terminal = −𝒉̂(T;t)𝝊̂(x), same dynamics as `dynamics`.
ConstraintSpec build_constraint_spec(const Setup& st, const ProblemSpec& dynamics, const BoldParams& bold,
                                     const Interval& gamma);

// δ𝓗(t;t,(ζ,c)) of the constraint system written out.
double expanded_bold_delta_H(const Setup& st, double x, const std::array<double, 2>& u,
                             const std::array<double, 2>& u_bar, double p, double q, double P);

// 𝑱 by the integrating factor along given state paths.
double bold_J_closed_form(const Setup& st, const BoldParams& bold, const StatePaths& X);

// Same feedback policy with consumption scaled by `a`.
FeedbackPolicy scale_consumption(const FeedbackPolicy& base, double a);

struct ConstrainedOptions {
    std::vector<double> rho_ladder;
    MoveOptions moves;
    int max_sweeps = 6;
    CaseTwoProbe probe;
    BsdeOptions bsde;
    // Binding mode: Γ = ]−∞, 𝑱(ū) − offset] and ū replaced by a consumption scaling
    // that puts 𝑱 on max Γ.
    bool binding = false;
    double binding_offset = 0.05;
};

struct ConstrainedReport {
    MultiplierReport multipliers;
    Interval gamma;
    double consumption_scale = 1.0;
    double bold_J = 0.0;
    double bold_J_se = 0.0;
    StationarityResult stationarity;
};

ConstrainedReport constrained_merton_report(const Setup& st, const FeedbackPolicy& policy, const BoldParams& bold,
                                            Interval gamma, const BrownianEnsemble& ens,
                                            const ConstrainedOptions& opt);

void write_policy_csv(const GridPolicy& pol, const std::string& path);

}  // namespace eqctl::merton
