#include <cmath>
#include <vector>

#include <gtest/gtest.h>
#include <omp.h>

#include "eqctl/paths.hpp"

namespace eqctl {
namespace {

TEST(TimeGrid, IndexOfSnapsAndRejectsOffGrid) {
    const TimeGrid g = make_grid(0.0, 1.0, 200);
    EXPECT_DOUBLE_EQ(g.dt(), 0.005);
    EXPECT_EQ(g.index_of(0.25), 50);
    EXPECT_EQ(g.index_of(1.0), 200);
    EXPECT_THROW(g.index_of(0.2512), std::invalid_argument);
    EXPECT_THROW(make_grid(1.0, 1.0, 10), std::invalid_argument);
}

TEST(Brownian, SameSeedSameIncrements) {
    const TimeGrid g = make_grid(0.0, 1.0, 50);
    const auto a = sample_brownian(g, 1000, 42);
    const auto b = sample_brownian(g, 1000, 42);
    const auto c = sample_brownian(g, 1000, 43);
    EXPECT_EQ(a.dw, b.dw);
    EXPECT_NE(a.dw, c.dw);
}

TEST(Brownian, SerialMatchesParallelBitwise) {
    const TimeGrid g = make_grid(0.0, 1.0, 40);
    const auto s = sample_brownian(g, 3000, 9, Exec::kSerial);
    omp_set_num_threads(3);
    const auto p = sample_brownian(g, 3000, 9, Exec::kParallel);
    omp_set_num_threads(1);
    EXPECT_EQ(s.dw, p.dw);
}

TEST(Brownian, IncrementMoments) {
    const TimeGrid g = make_grid(0.0, 1.0, 10);
    const auto e = sample_brownian(g, 50000, 1);
    const auto lv = brownian_levels(e);
    std::vector<double> wt(e.n_paths), wt2(e.n_paths);
    for (int p = 0; p < e.n_paths; ++p) {
        wt[p] = lv[static_cast<std::size_t>(10) * e.n_paths + p];
        wt2[p] = wt[p] * wt[p];
    }
    const McStat m = mc_mean(wt), v = mc_mean(wt2);
    EXPECT_LT(std::abs(m.mean), 4 * m.std_error);
    EXPECT_LT(std::abs(v.mean - 1.0), 4 * v.std_error);
}

TEST(Brownian, LevelsAreCumulativeSums) {
    const auto e = sample_brownian(make_grid(0.0, 1.0, 5), 4, 3);
    const auto lv = brownian_levels(e);
    for (int p = 0; p < 4; ++p) {
        double acc = 0.0;
        EXPECT_EQ(lv[p], 0.0);
        for (int k = 0; k < 5; ++k) {
            acc += e.inc(p, k);
            EXPECT_DOUBLE_EQ(lv[static_cast<std::size_t>(k + 1) * 4 + p], acc);
        }
    }
}

TEST(BlockSum, IndependentOfThreadCount) {
    std::vector<double> v(100003);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(1.0 + i) * 1e3 + 1e-7 * i;
    const double serial = block_sum(v, Exec::kSerial);
    for (int t : {1, 2, 5}) {
        omp_set_num_threads(t);
        EXPECT_EQ(block_sum(v, Exec::kParallel), serial) << t << " threads";
    }
    omp_set_num_threads(1);
}

TEST(McMean, KnownSample) {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const McStat s = mc_mean(v);
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_NEAR(s.std_error, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
    EXPECT_EQ(s.n, 4);
}

}  // namespace
}  // namespace eqctl
