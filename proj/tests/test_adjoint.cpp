#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "eqctl/adjoint.hpp"
#include "eqctl/registry.hpp"
#include "oracles.hpp"

namespace eqctl {
namespace {

oracle::Lq lq_oracle(const LqParams& k, double x0) {
    return {k.a, k.b1, k.c, k.d, k.Q, k.R, k.G, k.delta, k.gamma, x0, 1.0};
}

TEST(Generators, HandComputed) {
    CoefDerivs c;
    c.b_x = 0.1;
    c.sigma_x = 0.3;
    c.b_xx = 0.2;
    c.sigma_xx = -0.5;
    c.df = {2.0, -0.2, 0.25};
    c.d2f[0][0] = 1.0;
    c.d2f[1][2] = c.d2f[2][1] = 0.4;
    const double p = 1.5, q = -0.7, P = 0.8, Q = 0.1;
    // (b_x + f_z σ_x + f_y) p + (σ_x + f_z) q + f_x
    EXPECT_NEAR(generator_g(c, p, q), (0.1 + 0.075 - 0.2) * 1.5 + 0.55 * -0.7 + 2.0, 1e-14);
    const double zz = 0.3 * p + q;
    const double quad = 1.0 + 2 * 0.4 * p * zz;
    const double expect = (0.2 + 0.09 + 0.15 - 0.2) * P + (0.6 + 0.25) * Q + 0.2 * p - 0.5 * (0.25 * p + q) + quad;
    EXPECT_NEAR(generator_G(c, p, q, P, Q), expect, 1e-13);
}

class LqAdjoint : public ::testing::Test {
protected:
    void SetUp() override {
        ens = sample_brownian(make_grid(0.0, 1.0, 100), 20000, 12);
        sol = solve_fbsde(spec, constant_policy({0.0}), x0, ens);
        ctx = make_context(spec, sol, ens);
        adj = solve_adjoints(ctx);
    }
    const double x0 = 1.0;
    ProblemSpec spec = lq_toy();
    BrownianEnsemble ens;
    FbsdeSolution sol;
    AdjointContext ctx;
    Adjoints adj;
};

TEST_F(LqAdjoint, FirstOrderIsRiccatiTimesState) {
    const double psi0 = lq_oracle({}, x0).psi(0.0);
    EXPECT_NEAR(adj.first.p_at_t.mean, psi0 * x0, 0.01 * psi0);
    // p(s) = ψ(s) X(s) along every path at mid-horizon.
    const double psi5 = lq_oracle({}, x0).psi(0.5);
    double err = 0.0, ref = 0.0;
    for (int p = 0; p < ens.n_paths; ++p) {
        err += std::abs(adj.p(p, 50) - psi5 * sol.path.X.at(p, 50));
        ref += std::abs(psi5 * sol.path.X.at(p, 50));
    }
    EXPECT_LT(err / ref, 0.02);
}

TEST_F(LqAdjoint, SecondOrderIsDeterministic) {
    const double psi0 = lq_oracle({}, x0).psi(0.0);
    EXPECT_NEAR(adj.second.P_at_t.mean, psi0, 0.01 * psi0);
    EXPECT_NEAR(adj.P(123, 70), lq_oracle({}, x0).psi(0.7), 0.01 * psi0);
}

TEST_F(LqAdjoint, KappaMean) {
    const auto kappa = kappa_process(ctx);
    std::vector<double> last(kappa.end() - ens.n_paths, kappa.end());
    const McStat m = mc_mean(last);
    EXPECT_LT(std::abs(m.mean - std::exp(-0.2)), 4 * m.std_error + 1e-12);
}

TEST_F(LqAdjoint, ContextDerivativesMatchSpec) {
    const CoefDerivs c = ctx.at(10, 5);
    EXPECT_EQ(c.b_x, 0.1);
    EXPECT_EQ(c.sigma_x, 0.3);
    EXPECT_DOUBLE_EQ(c.df[0], sol.path.X.at(5, 10));
    EXPECT_EQ(c.df[1], -0.2);
    EXPECT_EQ(c.df[2], 0.25);
}

}  // namespace
}  // namespace eqctl
