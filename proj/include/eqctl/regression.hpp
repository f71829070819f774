#pragma once

#include <vector>

#include <Eigen/Dense>

#include "eqctl/paths.hpp"

namespace eqctl {

// Polynomial in the standardized feature z = (phi - center) / scale.
struct PolyFit {
    double center = 0.0;
    double scale = 1.0;
    double lo = 0.0;  // feature range seen by the fit
    double hi = 0.0;
    std::vector<double> c;

    double operator()(double phi) const;
    double deriv(double phi) const;  // d/dphi
    double eval_clamped(double phi) const;
};

// Least-squares projection onto {1, z, ..., z^degree} for one time step; the
// normal equations are factored once and reused for every target.
class StepRegression {
public:
    StepRegression(const double* phi, int n, int degree, Exec exec = Exec::kParallel);

    PolyFit fit(const double* target) const;
    // Fit and overwrite out[i] with the fitted value at phi[i].
    PolyFit project(const double* target, double* out) const;

    int degree_used() const { return degree_; }
    bool degraded() const { return degraded_; }

private:
    const double* phi_;
    int n_;
    int degree_;
    bool degraded_ = false;
    Exec exec_;
    double center_ = 0.0, scale_ = 1.0, lo_ = 0.0, hi_ = 0.0;
    Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

}  // namespace eqctl
