#pragma once

#include <string>
#include <vector>

#include "eqctl/bsde.hpp"
#include "eqctl/forward_sde.hpp"
#include "eqctl/problem.hpp"

namespace eqctl {

// Coefficient derivatives along the candidate at one (step, path).
struct CoefDerivs {
    double b_x = 0, b_xx = 0, sigma_x = 0, sigma_xx = 0;
    Vec3 df{};  // (f_x, f_y, f_z)
    Mat3 d2f{};
};

// Candidate bundle (ū, X̄, Ȳ, Z̄). Derivatives are evaluated on demand rather
// than cached: at 1e5 paths each cached field would cost 160 MB.
struct AdjointContext {
    const ProblemSpec* spec = nullptr;
    const StatePaths* X = nullptr;
    const ControlPath* u = nullptr;
    const BsdePair* yz = nullptr;
    const BrownianEnsemble* ens = nullptr;

    CoefDerivs at(int k, int p) const;  // k < n_steps
    double s(int k) const { return ens->grid.time(k); }
};

AdjointContext make_context(const ProblemSpec& spec, const FbsdeSolution& sol, const BrownianEnsemble& ens);

double generator_g(const CoefDerivs& c, double p, double q);
// G(s, P, Q) with the first-order pair (p, q) already solved.
double generator_G(const CoefDerivs& c, double p, double q, double P, double Q);

struct AdjointPairFirst {
    std::vector<double> p, q;  // time-major like BsdePair
    McStat p_at_t;
};

struct AdjointPairSecond {
    std::vector<double> P, Q;
    McStat P_at_t;
};

struct Adjoints {
    int n_paths = 0;
    AdjointPairFirst first;
    AdjointPairSecond second;

    double p(int pth, int k) const { return first.p[static_cast<std::size_t>(k) * n_paths + pth]; }
    double q(int pth, int k) const { return first.q[static_cast<std::size_t>(k) * n_paths + pth]; }
    double P(int pth, int k) const { return second.P[static_cast<std::size_t>(k) * n_paths + pth]; }
    double Q(int pth, int k) const { return second.Q[static_cast<std::size_t>(k) * n_paths + pth]; }
};

Adjoints solve_adjoints(const AdjointContext& ctx, const BsdeOptions& opt = {});

// κ(s) = exp{∫(f_y − f_z²/2) dr + ∫f_z dW}, time-major.
std::vector<double> kappa_process(const AdjointContext& ctx, Exec exec = Exec::kParallel);

void write_adjoint_csv(const Adjoints& adj, const std::vector<double>& kappa, const TimeGrid& grid,
                       const std::string& path);

}  // namespace eqctl
