#include <cmath>
#include <vector>

#include <gtest/gtest.h>
#include <omp.h>

#include "eqctl/bsde.hpp"
#include "eqctl/registry.hpp"
#include "oracles.hpp"

namespace eqctl {
namespace {

LinearBsdeSpec spec_for(const LinearOracleCase& c, const std::vector<double>& W, int n, int m) {
    LinearBsdeSpec s;
    s.alpha = [c](int, int) { return c.alpha; };
    s.beta = [c](int, int) { return c.beta; };
    s.gamma = [c](int, int) { return c.gamma; };
    s.xi = [c, &W, n, m](int p) {
        const double w = W[static_cast<std::size_t>(n) * m + p];
        return c.a + c.b * w + c.c * std::sin(w);
    };
    return s;
}

TEST(LinearOracle, ClosedFormMatchesQuadrature) {
    for (const auto& c : linear_oracle_cases())
        EXPECT_NEAR(c.closed_form(1.0), oracle::linear_bsde_value(c.alpha, c.beta, c.gamma, c.a, c.b, c.c, 1.0),
                    1e-9);
}

TEST(LinearBsde, MatchesOracleWithinTwoPercent) {
    const TimeGrid g = make_grid(0.0, 1.0, 100);
    const auto ens = sample_brownian(g, 20000, 21);
    const auto W = brownian_levels(ens);
    for (const auto& c : linear_oracle_cases()) {
        const double ref = oracle::linear_bsde_value(c.alpha, c.beta, c.gamma, c.a, c.b, c.c, 1.0);
        const BsdePair yz = solve_linear_bsde(spec_for(c, W, 100, ens.n_paths), ens);
        EXPECT_LT(std::abs(yz.y_at_t.mean - ref), 0.02 * std::abs(ref))
            << "alpha " << c.alpha << " beta " << c.beta << " gamma " << c.gamma;
    }
}

TEST(LinearBsde, SerialMatchesParallel) {
    const TimeGrid g = make_grid(0.0, 1.0, 40);
    const auto ens = sample_brownian(g, 3000, 2);
    const auto W = brownian_levels(ens);
    const LinearBsdeSpec s = spec_for(linear_oracle_cases()[4], W, 40, ens.n_paths);
    BsdeOptions o;
    o.exec = Exec::kSerial;
    const BsdePair a = solve_linear_bsde(s, ens, o);
    o.exec = Exec::kParallel;
    omp_set_num_threads(3);
    const BsdePair b = solve_linear_bsde(s, ens, o);
    omp_set_num_threads(1);
    EXPECT_EQ(a.Y, b.Y);
    EXPECT_EQ(a.Z, b.Z);
}

TEST(Eta, ExpectationIsExpBeta) {
    const TimeGrid g = make_grid(0.0, 1.0, 50);
    const auto ens = sample_brownian(g, 50000, 6);
    const auto eta = eta_process([](int, int) { return 0.3; }, [](int, int) { return 0.7; }, ens);
    std::vector<double> last(eta.end() - ens.n_paths, eta.end());
    const McStat m = mc_mean(last);
    EXPECT_LT(std::abs(m.mean - std::exp(0.3)), 4 * m.std_error);
    EXPECT_EQ(eta[0], 1.0);
}

TEST(Cost, ClosedFormAgreesWithRegression) {
    const ProblemSpec spec = lq_toy();
    const TimeGrid g = make_grid(0.0, 1.0, 100);
    const auto ens = sample_brownian(g, 20000, 17);
    const FeedbackPolicy pol = constant_policy({0.4});
    const ClosedLoop cl = simulate_closed_loop(spec, pol, 1.0, ens);
    const CostEstimate cf = evaluate_cost(spec, cl.X, cl.u, ens);
    ASSERT_TRUE(cf.closed_form);
    const BsdePair yz = solve_bsde_regression(spec, cl.X, cl.u, ens);
    const double se = std::hypot(cf.J.std_error, yz.y_at_t.std_error);
    EXPECT_LT(std::abs(cf.J.mean - yz.y_at_t.mean), 4 * se + 5e-3 * std::abs(cf.J.mean));
    EXPECT_EQ(static_cast<int>(cf.contrib.size()), ens.n_paths);
}

TEST(Continuity, LinearGapScalesWithTerminalGap) {
    const TimeGrid g = make_grid(0.0, 1.0, 50);
    const auto ens = sample_brownian(g, 5000, 30);
    const auto W = brownian_levels(ens);
    const LinearBsdeSpec s = spec_for(linear_oracle_cases()[2], W, 50, ens.n_paths);
    const ContinuityGap gap = continuity_gap_check(
        s, [&W, &ens](int p) { return std::cos(W[static_cast<std::size_t>(50) * ens.n_paths + p]); },
        {0.4, 0.2, 0.1, 0.05}, ens);
    EXPECT_NEAR(gap.slope, 1.0, 1e-6);
    EXPECT_GT(gap.K, 0.0);
    EXPECT_LT(gap.K, 20.0);
}

}  // namespace
}  // namespace eqctl
