#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "eqctl/constrained.hpp"

namespace eqctl {
namespace {

TEST(DistToInterval, MetricProperties) {
    std::mt19937_64 eng(1);
    std::uniform_real_distribution<double> U(-5.0, 5.0);
    std::bernoulli_distribution coin(0.2);
    for (int i = 0; i < 10000; ++i) {
        double a = U(eng), b = U(eng);
        if (a > b) std::swap(a, b);
        const Interval g{coin(eng) ? -INFINITY : a, coin(eng) ? INFINITY : b};
        const double v = U(eng), w = U(eng);
        const DistResult dv = dist_to_interval(v, g), dw = dist_to_interval(w, g);
        ASSERT_GE(dv.d, 0.0);
        ASSERT_EQ(dv.d == 0.0, g.contains(v));
        ASSERT_LE(std::abs(dv.d - dw.d), std::abs(v - w) * (1 + 1e-12) + 1e-15);
        const double ref = v < g.lo ? g.lo - v : (v > g.hi ? v - g.hi : 0.0);
        ASSERT_NEAR(dv.d, ref, 1e-15);
        ASSERT_EQ(dv.subgrad, v < g.lo ? -1 : (v > g.hi ? 1 : 0));
    }
}

TEST(PenalizedCost, Identities) {
    const Interval g{-1.0, 1.0};
    EXPECT_DOUBLE_EQ(penalized_cost(0.3, 0.0, 0.2, g), 0.5);
    EXPECT_DOUBLE_EQ(penalized_cost(-0.2, 0.0, 0.2, g), 0.0);
    EXPECT_DOUBLE_EQ(penalized_cost(3.7, 4.0, 0.3, g), 5.0);
    EXPECT_THROW(penalized_cost(0.0, 0.0, 0.0, g), std::invalid_argument);
}

TEST(Ladder, GeometricQuarters) {
    const auto r = default_rho_ladder(0.4, 4);
    ASSERT_EQ(r.size(), 4u);
    EXPECT_DOUBLE_EQ(r[0], 0.4);
    EXPECT_DOUBLE_EQ(r[3], 0.4 / 64.0);
}

TEST(Transversality, Cases) {
    const Interval g{-INFINITY, -0.8};
    EXPECT_TRUE(transversality_check(0.0, -2.0, g, default_gamma_sample(g, -2.0), 0.0).pass);
    const auto at_edge = transversality_check(0.1, -0.8, g, default_gamma_sample(g, -0.8), 0.0);
    EXPECT_TRUE(at_edge.pass);
    EXPECT_EQ(at_edge.margin, 0.0);
    EXPECT_FALSE(transversality_check(0.1, -2.0, g, default_gamma_sample(g, -2.0), 0.0).pass);
}

// Toy pair: J(v) = mean (v − ½)² − ¼ so that J(0) = 0, 𝑱(v) = mean v.
struct Toy {
    TimeGrid grid = make_grid(0.0, 1.0, 8);
    int m = 6;
    ControlPath zero = constant_control(grid, m, {0.0});
    StatePaths base;
    MoveSet moves;

    Toy() {
        base.grid = grid;
        base.n_paths = m;
        for (int k = 0; k <= grid.n_steps; ++k)
            for (int p = 0; p < m; ++p) base.x.push_back(p + 0.1 * k);
        MoveOptions o;
        o.n_windows = 4;
        o.window_steps = {1, 2};
        o.values_per_dim = 5;
        o.mask_quantiles = {0.8};
        moves = make_spike_moves(grid, Box{{0.0}, {1.0}}, base, o);
    }
    static CostPair eval(const ControlPath& v) {
        double j = 0.0, b = 0.0;
        for (double x : v.values) {
            j += (x - 0.5) * (x - 0.5);
            b += x;
        }
        const double n = static_cast<double>(v.values.size());
        return {j / n - 0.25, b / n};
    }
};

TEST(ControlDist, CountsDifferingCells) {
    Toy t;
    ControlPath v = t.zero;
    *v.mut(2, 3) = 1.0;
    *v.mut(4, 3) = 1.0;
    *v.mut(4, 7) = 0.5;
    EXPECT_DOUBLE_EQ(control_dist(t.zero, v), t.grid.dt() * 3 / t.m);
    EXPECT_EQ(control_dist(v, v), 0.0);
}

TEST(Ekeland, AcceptanceInvariants) {
    Toy t;
    ASSERT_FALSE(t.moves.moves.empty());
    // Raising one cell to ½ lowers J by ¼ per unit distance, so moves pay off only for √ρ < ¼.
    const Interval g{-INFINITY, 0.01};
    for (double rho : {0.05, 0.02, 0.0125}) {
        const double start = penalized_cost(0.0, 0.0, rho, g);
        const EkelandResult r = ekeland_search(t.zero, Toy::eval, t.moves, rho, g);
        EXPECT_LE(r.J_rho, start);
        EXPECT_LE(r.dist, (start - r.J_rho) / std::sqrt(rho) + 1e-12);
        EXPECT_GT(r.accepted, 0);
        EXPECT_LE(r.cost.bold_J, 0.01 + std::sqrt(rho));
    }
}

TEST(Ekeland, LadderMultipliersAreNormalized) {
    Toy t;
    // J ≥ −𝑱, so with ρ above max Γ the penalized cost stays positive on every rung.
    const Interval g{-INFINITY, 0.01};
    const MultiplierReport rep =
        multipliers_from_ladder(t.zero, Toy::eval, t.moves, g, {0.05, 0.03, 0.02, 0.0125}, {{1.0}}, 0.0);
    ASSERT_EQ(rep.rungs.size(), 4u);
    for (const Rung& r : rep.rungs) {
        EXPECT_LE(r.J_rho, r.rho + 1e-14);
        EXPECT_LE(r.dist, std::sqrt(r.rho) + 1e-14);
        EXPECT_NEAR(r.psi * r.psi + r.bold_psi * r.bold_psi, 1.0, 1e-12);
        EXPECT_GE(r.psi, 0.0);
        EXPECT_GE(r.bold_psi, 0.0);
        EXPECT_EQ(r.case_id, 1);
    }
    EXPECT_NEAR(rep.psi * rep.psi + rep.bold_psi * rep.bold_psi, 1.0, 1e-12);
    EXPECT_THROW(multipliers_from_ladder(t.zero, Toy::eval, t.moves, g, {0.1, 0.2}, {{1.0}}, 0.0),
                 std::invalid_argument);
}

}  // namespace
}  // namespace eqctl
