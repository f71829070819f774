#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "eqctl/hamiltonian.hpp"
#include "eqctl/registry.hpp"
#include "oracles.hpp"

namespace eqctl {
namespace {

TEST(Hamiltonian, GeneralFormByHand) {
    const ProblemSpec spec = lq_toy();
    const std::vector<double> u{0.5}, ub{-0.2};
    const double x = 1.0, xb = 0.8, y = 0.2, z = 0.1, p = 1.3, q = 0.4, P = 0.9;
    const double b = 0.1 * x + 0.5 * 0.5, sig = 0.3 * x + 0.4 * 0.5;
    const double dsig = sig - (0.3 * xb + 0.4 * -0.2);
    const double zz = z + p * dsig;
    const double f = 0.5 * (x * x + 0.5 * 0.25) - 0.2 * y + 0.25 * zz;
    const double expect = p * b + q * sig + 0.5 * P * dsig * dsig + f;
    EXPECT_NEAR(H_general(spec, 0.0, x, u, y, z, p, q, P, xb, ub), expect, 1e-14);
    const HamiltonianEval e = eval_H_general(spec, 0.0, x, u, y, z, p, q, P, xb, ub);
    EXPECT_NEAR(e.value, expect, 1e-14);
    const double first = p * b + q * sig + 0.5 * (x * x + 0.5 * 0.25) - 0.2 * y + 0.25 * z;
    EXPECT_NEAR(eval_H_first(spec, 0.0, x, u, y, z, p, q).value, first, 1e-14);
}

TEST(BoxArgmin, QuadraticAndCorner) {
    const Box U{{-1.0, 0.0}, {1.0, 1.0}};
    const auto a = box_argmin(U, [](UView u) { return std::pow(u[0] - 0.31, 2) + std::pow(u[1] - 0.77, 2); });
    EXPECT_NEAR(a[0], 0.31, 1e-6);
    EXPECT_NEAR(a[1], 0.77, 1e-6);
    const auto c = box_argmin(U, [](UView u) { return u[0] - u[1]; });
    EXPECT_EQ(c[0], -1.0);
    EXPECT_EQ(c[1], 1.0);
    EXPECT_THROW(box_argmin(Box{{0.0}, {INFINITY}}, [](UView) { return 0.0; }), std::invalid_argument);
}

TEST(Probes, DefaultMeshIncludesInitialTime) {
    const ProbeSet ps = default_probes(Box{{-1.0, 0.0}, {1.0, 1.0}}, make_grid(0.0, 1.0, 100), 4, 5);
    EXPECT_EQ(ps.steps.front(), 0);
    EXPECT_EQ(ps.steps.back(), 99);
    EXPECT_EQ(ps.steps.size(), 5u);
    EXPECT_EQ(ps.controls.size(), 16u);
}

class LqHamiltonian : public ::testing::Test {
protected:
    void SetUp() override {
        ens = sample_brownian(make_grid(0.0, 1.0, 100), 20000, 31);
        sol = solve_fbsde(spec, constant_policy({0.0}), 1.0, ens);
        adj = solve_adjoints(make_context(spec, sol, ens));
        kappa = kappa_process(make_context(spec, sol, ens));
        bundle = CandidateBundle{make_context(spec, sol, ens), &adj, &kappa};
    }
    ProblemSpec spec = lq_toy();
    BrownianEnsemble ens;
    FbsdeSolution sol;
    Adjoints adj;
    std::vector<double> kappa;
    CandidateBundle bundle;
};

TEST_F(LqHamiltonian, ZeroAtCandidate) {
    const ProbeControl same{{}, &sol.path.u};
    for (int k : {0, 40, 99})
        for (double v : delta_H(bundle, k, same)) EXPECT_NEAR(v, 0.0, 1e-14);
}

TEST_F(LqHamiltonian, SpikeDerivativeMatchesRiccatiOracle) {
    const oracle::Lq lq{0.1, 0.5, 0.3, 0.4, 1.0, 0.5, 1.0, 0.2, 0.25, 1.0, 1.0};
    for (int k : {0, 30, 70})
        for (double u : {-1.0, -0.3, 0.6}) {
            const McStat m = spike_derivative_hamiltonian(bundle, k, ProbeControl{{u}, nullptr});
            const double ref = lq.spike(k * 0.01, u);
            EXPECT_LT(std::abs(m.mean - ref), 4 * m.std_error + 0.01 * std::abs(ref)) << "k " << k << " u " << u;
        }
}

TEST_F(LqHamiltonian, ZeroControlIsNotAnEquilibrium) {
    const EquilibriumReport rep = verify_equilibrium(bundle, default_probes(spec.control_set, ens.grid, 5, 4));
    EXPECT_EQ(rep.verdict, Verdict::kFail);
    ASSERT_GE(rep.worst, 0);
    EXPECT_TRUE(rep.probes[rep.worst].negative);
}

}  // namespace
}  // namespace eqctl
