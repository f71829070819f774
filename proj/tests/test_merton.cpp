#include <array>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "eqctl/merton.hpp"
#include "eqctl/registry.hpp"

namespace eqctl {
namespace {

using namespace merton;

TEST(Discount, ExponentialIsTimeConsistent) {
    std::mt19937_64 eng(3);
    std::uniform_real_distribution<double> U(0.0, 5.0);
    std::vector<std::array<double, 3>> tr;
    while (tr.size() < 1000) {
        std::array<double, 3> a{U(eng), U(eng), U(eng)};
        std::sort(a.begin(), a.end());
        if (a[0] < a[1] && a[1] < a[2]) tr.push_back(a);
    }
    EXPECT_LT(std::abs(check_time_consistency(exponential_discount(0.37), tr)), 1e-14);
    EXPECT_GT(std::abs(check_time_consistency(hyperbolic_discount(1.0), tr)), 1e-3);
}

TEST(Discount, HyperbolicGapAtKnownTriple) {
    EXPECT_NEAR(check_time_consistency(hyperbolic_discount(1.0), {{0.0, 0.5, 1.0}}), -1.0 / 18.0, 1e-15);
    EXPECT_THROW(check_time_consistency(hyperbolic_discount(1.0), {{0.5, 0.5, 1.0}}), std::invalid_argument);
}

TEST(Utility, CrraInverseMarginal) {
    const Utility u = crra_utility(0.5, 2.0);
    for (double x : {0.1, 1.0, 7.5}) {
        EXPECT_NEAR(u.u(x), 2.0 * std::sqrt(x) / 0.5, 1e-14);
        EXPECT_NEAR(u.inverse_neg_marginal(-u.u_prime(x)), x, 1e-12 * x);
    }
    EXPECT_THROW(u.inverse_neg_marginal(0.5), std::domain_error);
}

TEST(GridPolicy, ReproducesLinearInLogWealth) {
    GridPolicy g({0.0, 0.5, 1.0}, 9, std::log(0.2), std::log(5.0));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 9; ++j) {
            const double xi = std::log(g.x_node(i, j));
            g.zeta(i, j) = 0.1 + 0.2 * xi + 0.1 * i;
            g.c(i, j) = 0.3;
        }
    g.refresh();
    for (double x : {0.3, 0.9, 2.2, 4.1}) {
        double u[2], d1[2], d2[2];
        g.eval(0.25, x, u, d1, d2);
        EXPECT_NEAR(u[0], 0.1 + 0.2 * std::log(x) + 0.05, 1e-12);
        EXPECT_NEAR(d1[0], 0.2 / x, 1e-10);
        EXPECT_NEAR(d2[0], -0.2 / (x * x), 1e-10);
        EXPECT_NEAR(u[1], 0.3, 1e-14);
        EXPECT_NEAR(d1[1], 0.0, 1e-12);
    }
    double u[2], d1[2], d2[2];
    g.eval(0.0, 100.0, u, d1, d2);
    EXPECT_NEAR(u[0], 0.1 + 0.2 * std::log(5.0), 1e-12);
    EXPECT_EQ(d1[0], 0.0);
}

TEST(GridPolicy, ClampsToControlSet) {
    GridPolicy g({0.0, 1.0}, 4, -1.0, 1.0);
    g.fill(3.0, -0.5);
    g.refresh();
    double u[2];
    g.eval(0.5, 1.0, u);
    EXPECT_EQ(u[0], 1.0);
    EXPECT_EQ(u[1], 0.0);
}

TEST(MertonSpec, DerivativesMatchFiniteDifferences) {
    const merton::Setup st = merton_setup("merton-crra-hyperbolic");
    const ProblemSpec s = build_merton_spec(st, constant_policy({0.4, 0.3}));
    const std::vector<double> u{0.4, 0.3};
    const double h = 1e-5;
    for (double sv : {0.0, 0.6})
        for (double x : {0.5, 1.3}) {
            const double y = -0.4, z = 0.2;
            EXPECT_NEAR(s.b_x(sv, x, u), (s.b(sv, x + h, u) - s.b(sv, x - h, u)) / (2 * h), 1e-8);
            EXPECT_NEAR(s.sigma_x(sv, x, u), (s.sigma(sv, x + h, u) - s.sigma(sv, x - h, u)) / (2 * h), 1e-8);
            const Vec3 g = s.grad_f(sv, x, u, y, z);
            EXPECT_NEAR(g[0], (s.f(sv, x + h, u, y, z) - s.f(sv, x - h, u, y, z)) / (2 * h), 1e-7);
            EXPECT_NEAR(g[1], (s.f(sv, x, u, y + h, z) - s.f(sv, x, u, y - h, z)) / (2 * h), 1e-7);
            EXPECT_NEAR(g[2], (s.f(sv, x, u, y, z + h) - s.f(sv, x, u, y, z - h)) / (2 * h), 1e-7);
            const Mat3 H = s.hess_f(sv, x, u, y, z);
            const Vec3 gp = s.grad_f(sv, x + h, u, y, z), gm = s.grad_f(sv, x - h, u, y, z);
            EXPECT_NEAR(H[0][0], (gp[0] - gm[0]) / (2 * h), 1e-6);
            EXPECT_NEAR(s.h_x(x), (s.h(x + h) - s.h(x - h)) / (2 * h), 1e-8);
            EXPECT_NEAR(s.h_xx(x), (s.h_x(x + h) - s.h_x(x - h)) / (2 * h), 1e-7);
            // f = −ℏ(s;0)[υ(cx) + βy + γz] with ℏ = 1/(1 + s).
            const double hk = 1.0 / (1.0 + sv);
            EXPECT_NEAR(s.f(sv, x, u, y, z), -hk * (2.0 * std::sqrt(0.3 * x) + 0.1 * y + 0.32 * z), 1e-13);
        }
}

TEST(MertonAdjoint, ExpandedDriftEqualsGenerator) {
    const merton::Setup st = merton_setup("merton-crra-hyperbolic");
    const auto ens = sample_brownian(make_grid(0.0, 1.0, 50), 2000, 4);
    GridPolicy g = make_grid_policy(st, 10, 8);
    g.fill(0.6, 0.25);
    for (int i = 0; i <= 10; ++i)
        for (int j = 0; j < 8; ++j) g.zeta(i, j) += 0.05 * std::log(g.x_node(i, j));
    g.refresh();
    const AdjointSolve a = merton_adjoint_solve(st, g.feedback(), ens);
    EXPECT_LT(a.expanded_drift_gap, 1e-10);
}

TEST(MertonConstraint, BoldJClosedFormMatchesRegression) {
    const merton::Setup st = merton_setup("merton-crra-hyperbolic");
    const auto ens = sample_brownian(make_grid(0.0, 1.0, 100), 20000, 8);
    const ProblemSpec dyn = build_merton_spec(st, constant_policy({0.5, 0.2}));
    BoldParams bold;
    bold.discount = bold.discount_hat = exponential_discount(0.2);
    bold.utility = crra_utility(0.5);
    const ConstraintSpec cs = build_constraint_spec(st, dyn, bold, Interval{});
    const ClosedLoop cl = simulate_closed_loop(dyn, constant_policy({0.5, 0.2}), st.x0, ens);
    const double cf = bold_J_closed_form(st, bold, cl.X);
    const BsdePair yz = solve_bsde_regression(cs.bold, cl.X, cl.u, ens);
    EXPECT_LT(std::abs(cf - yz.y_at_t.mean), 4 * yz.y_at_t.std_error + 2e-3 * std::abs(cf));
}

TEST(ScaleConsumption, OnlyConsumptionChanges) {
    const FeedbackPolicy p = scale_consumption(constant_policy({0.5, 0.4}), 0.5);
    double u[2];
    p.pi(0.3, 1.0, u);
    EXPECT_EQ(u[0], 0.5);
    EXPECT_DOUBLE_EQ(u[1], 0.2);
}

}  // namespace
}  // namespace eqctl
