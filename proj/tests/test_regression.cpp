#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "eqctl/regression.hpp"

namespace eqctl {
namespace {

TEST(StepRegression, RecoversCubicExactly) {
    std::mt19937_64 eng(5);
    std::normal_distribution<double> N(2.0, 0.7);
    const int n = 5000;
    std::vector<double> phi(n), y(n), fitted(n);
    for (int i = 0; i < n; ++i) {
        phi[i] = N(eng);
        y[i] = 1.0 - 2.0 * phi[i] + 0.5 * phi[i] * phi[i] - 0.1 * phi[i] * phi[i] * phi[i];
    }
    const StepRegression reg(phi.data(), n, 3);
    const PolyFit f = reg.project(y.data(), fitted.data());
    for (int i = 0; i < n; i += 97) EXPECT_NEAR(fitted[i], y[i], 1e-9);
    EXPECT_NEAR(f(0.3), 1.0 - 0.6 + 0.045 - 0.0027, 1e-9);
    EXPECT_NEAR(f.deriv(0.3), -2.0 + 0.3 - 0.027, 1e-8);
    EXPECT_FALSE(reg.degraded());
}

TEST(StepRegression, ConstantFeatureFallsBackToMean) {
    const int n = 100;
    std::vector<double> phi(n, 1.5), y(n), out(n);
    for (int i = 0; i < n; ++i) y[i] = i;
    const StepRegression reg(phi.data(), n, 3);
    reg.project(y.data(), out.data());
    EXPECT_EQ(reg.degree_used(), 0);
    for (double v : out) EXPECT_NEAR(v, 49.5, 1e-12);
}

TEST(StepRegression, ProjectionIsOrthogonalToBasis) {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const int n = 2000;
    std::vector<double> phi(n), y(n), out(n);
    for (int i = 0; i < n; ++i) {
        phi[i] = U(eng);
        y[i] = std::exp(phi[i]) + 0.2 * U(eng);
    }
    const StepRegression reg(phi.data(), n, 2);
    reg.project(y.data(), out.data());
    for (int d = 0; d <= 2; ++d) {
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += (y[i] - out[i]) * std::pow(phi[i], d);
        EXPECT_NEAR(dot / n, 0.0, 1e-10) << "degree " << d;
    }
}

TEST(PolyFit, ClampedEvaluationHoldsEndValues) {
    std::vector<double> phi{0.0, 1.0, 2.0, 3.0}, y{0.0, 1.0, 4.0, 9.0};
    const StepRegression reg(phi.data(), 4, 2);
    const PolyFit f = reg.fit(y.data());
    EXPECT_NEAR(f.eval_clamped(5.0), 9.0, 1e-9);
    EXPECT_NEAR(f.eval_clamped(-1.0), 0.0, 1e-9);
    EXPECT_NEAR(f(5.0), 25.0, 1e-8);
}

}  // namespace
}  // namespace eqctl
