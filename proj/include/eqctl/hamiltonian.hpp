#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eqctl/adjoint.hpp"
#include "eqctl/bsde.hpp"
#include "eqctl/problem.hpp"

namespace eqctl {

struct HamiltonianEval {
    double value = 0.0;
    double s = 0, x = 0, y = 0, z = 0, p = 0, q = 0, P = 0, x_bar = 0;
    std::vector<double> u, u_bar;
};

// ℋ = p b + q σ + ½P(δσ)² + f(s, x, u, y, z + p δσ), δσ = σ(s,x,u) − σ(s,x̄,ū).
HamiltonianEval eval_H_general(const ProblemSpec& spec, double s, double x, UView u, double y, double z, double p,
                               double q, double P, double x_bar, UView u_bar);
// H = p b + q σ + f(s, x, u, y, z).
HamiltonianEval eval_H_first(const ProblemSpec& spec, double s, double x, UView u, double y, double z, double p,
                             double q);

double H_general(const ProblemSpec& spec, double s, double x, UView u, double y, double z, double p, double q,
                 double P, double x_bar, UView u_bar);

// Everything the Hamiltonian estimators read along one candidate.
struct CandidateBundle {
    AdjointContext ctx;
    const Adjoints* adj = nullptr;
    const std::vector<double>* kappa = nullptr;

    int n_paths() const { return ctx.ens->n_paths; }
};

// Probe value: a constant control or a realized alternative path.
struct ProbeControl {
    std::vector<double> value;
    const ControlPath* path = nullptr;

    UView at(int p, int k) const { return path ? path->at(p, k) : UView(value); }
};

// δℋ(s_k; t, u) per path, holding (X̄, Ȳ, Z̄, p, q, P) fixed.
std::vector<double> delta_H(const CandidateBundle& b, int k, const ProbeControl& u);

McStat spike_derivative_hamiltonian(const CandidateBundle& b, int k, const ProbeControl& u);

// Hamiltonian scale at step k: mean of |p b| + |q σ| + |f| along the candidate.
double hamiltonian_scale(const CandidateBundle& b, int k);

struct FdEstimate {
    std::vector<double> eps;
    std::vector<McStat> ratio;  // [J(ū^ε) − J(ū)]/ε per ε
    McStat extrapolated;
    double window_start = 0.0;  // of the largest ε
    bool monotone_warning = false;
};

// Coupled finite differences with a pathwise Richardson combination over the ladder
// (which must halve: ε, ε/2, ε/4). The window is [s, s+ε], or [s−ε, s] when s = T.
FdEstimate spike_derivative_fd(const ProblemSpec& spec, const ClosedLoop& candidate, const CostEstimate& base_cost,
                               const ProbeControl& alt, double s, const std::vector<double>& eps_ladder,
                               const BrownianEnsemble& ens, const BsdeOptions& opt = {});

struct ProbeResult {
    double s = 0.0;
    int step = 0;
    std::vector<double> u;
    McStat stat;
    double violation_fraction = 0.0;  // paths with δℋ < −tol
    bool negative = false;            // mean < −(4·std_error + tolerance)
};

enum class Verdict { kPass, kFail, kInconclusive };
const char* verdict_name(Verdict v);

struct EquilibriumReport {
    std::vector<ProbeResult> probes;
    Verdict verdict = Verdict::kPass;
    int worst = -1;                      // probe with the smallest mean / std_error
    double max_violation_fraction = 0.0;
};

struct ProbeSet {
    std::vector<int> steps;
    std::vector<std::vector<double>> controls;
};

// Default mesh: 16 points per U-dimension, 8 grid times including s = t.
ProbeSet default_probes(const Box& U, const TimeGrid& grid, int per_dim = 16, int n_times = 8);

// A probe is negative when its mean is below -(4 std_error + rel_tol * scale).
EquilibriumReport verify_equilibrium(const CandidateBundle& b, const ProbeSet& probes,
                                     double max_violation_fraction = 1e-3, double rel_tol = 1e-3);

// Minimizer over a box by a coarse grid plus per-coordinate golden-section refinement;
// ties go to the smallest coordinates.
std::vector<double> box_argmin(const Box& U, const std::function<double(UView)>& fn, int grid_points = 64);

std::vector<double> hamiltonian_argmin(const ProblemSpec& spec, double s, double x, double y, double z, double p,
                                       double q, double P, UView u_bar, int grid_points = 64);

void write_probe_csv(const EquilibriumReport& rep, const std::string& path);

}  // namespace eqctl
