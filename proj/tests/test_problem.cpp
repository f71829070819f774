#include <cmath>
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "eqctl/forward_sde.hpp"
#include "eqctl/merton.hpp"
#include "eqctl/problem.hpp"
#include "eqctl/registry.hpp"

namespace eqctl {
namespace {

TEST(Box, ContainsAndBounded) {
    const Box b{{-1.0, 0.0}, {1.0, 1.0}};
    const std::vector<double> in{0.5, 0.5}, out{0.5, 1.5}, edge{1.0 + 1e-9, 0.0};
    EXPECT_TRUE(b.contains(in));
    EXPECT_FALSE(b.contains(out));
    EXPECT_FALSE(b.contains(edge));
    EXPECT_TRUE(b.contains(edge, 1e-8));
    EXPECT_TRUE(b.bounded());
    EXPECT_FALSE((Box{{0.0}, {INFINITY}}).bounded());
}

TEST(Spike, WindowStepsAndValidation) {
    const TimeGrid g = make_grid(0.0, 1.0, 100);
    SpikeSpec sp{{1.0}, nullptr, 0.3, 0.05, {}};
    const auto [k0, k1] = spike_steps(g, sp);
    EXPECT_EQ(k0, 30);
    EXPECT_EQ(k1, 35);
    sp.epsilon = 0.004;
    EXPECT_THROW(spike_steps(g, sp), std::invalid_argument);
    sp.epsilon = 0.05;
    sp.window_start = 0.98;
    EXPECT_THROW(spike_steps(g, sp), std::invalid_argument);
}

TEST(Spike, OnlyWindowAndMaskedPathsChange) {
    const TimeGrid g = make_grid(0.0, 1.0, 10);
    const ControlPath base = constant_control(g, 4, {0.0});
    SpikeSpec sp{{0.7}, nullptr, 0.2, 0.3, {1, 0, 1, 0}};
    const ControlPath v = apply_spike(base, sp);
    for (int k = 0; k < 10; ++k)
        for (int p = 0; p < 4; ++p) {
            const bool hit = k >= 2 && k < 5 && p % 2 == 0;
            EXPECT_EQ(v.at(p, k)[0], hit ? 0.7 : 0.0) << k << "," << p;
        }
    auto alt = std::make_shared<ControlPath>(constant_control(g, 4, {-0.4}));
    const ControlPath w = apply_spike(base, SpikeSpec{{}, alt, 0.0, 0.1, {}});
    EXPECT_EQ(w.at(3, 0)[0], -0.4);
    EXPECT_EQ(w.at(3, 1)[0], 0.0);
}

TEST(Policy, RealizeControlEvaluatesFeedback) {
    const ProblemSpec spec = lq_toy();
    const TimeGrid g = make_grid(0.0, 1.0, 4);
    FeedbackPolicy pol;
    pol.dim = 1;
    pol.pi = [](double s, double x, double* u) { u[0] = s - 0.1 * x; };
    std::vector<double> state(5 * 3);
    for (std::size_t i = 0; i < state.size(); ++i) state[i] = 0.5 * i;
    const ControlPath u = realize_control(spec, pol, g, 3, state);
    ASSERT_EQ(u.values.size(), 4u * 3u);
    for (int k = 0; k < 4; ++k)
        for (int p = 0; p < 3; ++p) EXPECT_DOUBLE_EQ(u.at(p, k)[0], g.time(k) - 0.1 * state[k * 3 + p]);
}

TEST(Assumption, ToyProblemsAreRegular) {
    const TimeGrid g = make_grid(0.0, 1.0, 100);
    for (const ProblemSpec& s : {generic_toy(), lq_toy()}) {
        const AssumptionReport r = check_assumption_A(s, g, 400);
        EXPECT_TRUE(r.growth_ok) << s.name;
        EXPECT_TRUE(r.fd_consistent) << s.name << " max rel err " << r.max_fd_rel_error;
        EXPECT_GT(r.samples, 0);
    }
}

TEST(Assumption, BrokenDerivativeIsReported) {
    ProblemSpec s = generic_toy();
    s.b_x = [](double, double, UView) { return 5.0; };
    const AssumptionReport r = check_assumption_A(s, make_grid(0.0, 1.0, 10), 200);
    EXPECT_FALSE(r.fd_consistent);
    EXPECT_LT(r.fd_pass_fraction, 1.0);
}

}  // namespace
}  // namespace eqctl
