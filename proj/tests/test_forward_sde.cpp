#include <cmath>
#include <vector>

#include <gtest/gtest.h>
#include <omp.h>

#include "eqctl/forward_sde.hpp"
#include "eqctl/registry.hpp"

namespace eqctl {
namespace {

TEST(SimulateState, GeometricMeanMatchesEulerProduct) {
    const ProblemSpec spec = lq_toy();
    const TimeGrid g = make_grid(0.0, 1.0, 50);
    const auto ens = sample_brownian(g, 40000, 3);
    const StatePaths X = simulate_state(spec, constant_control(g, ens.n_paths, {0.0}), 1.0, ens);
    std::vector<double> xt(X.step(50), X.step(50) + ens.n_paths);
    const McStat m = mc_mean(xt);
    // Euler for dX = aX ds + cX dW: E X_T = (1 + a dt)^n exactly.
    const double expect = std::pow(1.0 + 0.1 * g.dt(), 50);
    EXPECT_LT(std::abs(m.mean - expect), 4 * m.std_error);
    EXPECT_EQ(X.domain_violations, 0);
}

TEST(SimulateState, SerialMatchesParallelBitwise) {
    const ProblemSpec spec = generic_toy();
    const TimeGrid g = make_grid(0.0, 1.0, 30);
    const auto ens = sample_brownian(g, 2001, 8);
    const ControlPath u = constant_control(g, ens.n_paths, {0.3});
    const StatePaths a = simulate_state(spec, u, 0.5, ens, Exec::kSerial);
    omp_set_num_threads(3);
    const StatePaths b = simulate_state(spec, u, 0.5, ens, Exec::kParallel);
    const ClosedLoop cl = simulate_closed_loop(spec, constant_policy({0.3}), 0.5, ens, Exec::kParallel);
    omp_set_num_threads(1);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(cl.X.x, a.x);
}

TEST(SimulateState, NonFiniteStateThrows) {
    ProblemSpec spec = generic_toy();
    spec.b = [](double s, double x, UView) { return s > 0.5 ? 1e308 * (1.0 + x * x) : 0.0; };
    const TimeGrid g = make_grid(0.0, 1.0, 20);
    const auto ens = sample_brownian(g, 10, 1);
    try {
        simulate_state(spec, constant_control(g, 10, {0.0}), 0.0, ens, Exec::kSerial);
        FAIL() << "expected SimulationError";
    } catch (const SimulationError& e) {
        EXPECT_GT(e.step, 10);
        EXPECT_FALSE(std::isfinite(e.value));
    }
}

TEST(Variations, VanishOutsideSpikeEffect) {
    const ProblemSpec spec = generic_toy();
    const TimeGrid g = make_grid(0.0, 1.0, 40);
    const auto ens = sample_brownian(g, 500, 4);
    const ControlPath u = constant_control(g, ens.n_paths, {0.0});
    const StatePaths X = simulate_state(spec, u, 0.2, ens);
    const VariationPaths v = simulate_variations(spec, X, u, SpikeSpec{{1.0}, nullptr, 0.5, 0.1, {}}, ens);
    for (int k = 0; k <= 20; ++k)
        for (int p = 0; p < ens.n_paths; ++p) {
            EXPECT_EQ(v.first[static_cast<std::size_t>(k) * ens.n_paths + p], 0.0);
            EXPECT_EQ(v.second[static_cast<std::size_t>(k) * ens.n_paths + p], 0.0);
        }
    double mag = 0.0;
    for (int p = 0; p < ens.n_paths; ++p) mag += std::abs(v.first[static_cast<std::size_t>(24) * ens.n_paths + p]);
    EXPECT_GT(mag, 0.0);
}

TEST(OrderFit, ToySlopesNearTheory) {
    const ProblemSpec spec = generic_toy();
    const TimeGrid g = make_grid(0.0, 1.0, 400);
    const auto ens = sample_brownian(g, 4000, 13);
    const OrderFit f = order_fit(spec, constant_policy({0.0}), 1.0, ens, {1.0}, 0.3, 0.2, 1);
    ASSERT_FALSE(f.skipped);
    EXPECT_NEAR(f.slope[1], f.expected[1], 0.1);
    EXPECT_NEAR(f.slope[3], f.expected[3], 0.1);
    EXPECT_GT(f.slope[2], f.expected[2] - 0.2);
}

}  // namespace
}  // namespace eqctl
