#include "eqctl/regression.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace eqctl {

namespace {

constexpr int kBlock = 2048;

// Blocked accumulation of sum_i w_i * z_i^j for j = 0..m, thread-count independent.
Eigen::VectorXd moments(const double* phi, const double* w, int n, double center, double scale, int m, Exec exec) {
    const int nb = (n + kBlock - 1) / kBlock;
    std::vector<double> part(static_cast<std::size_t>(nb) * (m + 1), 0.0);
#pragma omp parallel for schedule(static) if (exec == Exec::kParallel && nb > 1)
    for (int b = 0; b < nb; ++b) {
        double* acc = part.data() + static_cast<std::size_t>(b) * (m + 1);
        const int e = std::min(n, (b + 1) * kBlock);
        for (int i = b * kBlock; i < e; ++i) {
            const double z = (phi[i] - center) / scale;
            double zp = w ? w[i] : 1.0;
            for (int j = 0; j <= m; ++j) {
                acc[j] += zp;
                zp *= z;
            }
        }
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m + 1);
    for (int b = 0; b < nb; ++b)
        for (int j = 0; j <= m; ++j) out[j] += part[static_cast<std::size_t>(b) * (m + 1) + j];
    return out;
}

}  // namespace

double PolyFit::operator()(double phi) const {
    const double z = (phi - center) / scale;
    double v = 0.0;
    for (int j = static_cast<int>(c.size()) - 1; j >= 0; --j) v = v * z + c[j];
    return v;
}

double PolyFit::deriv(double phi) const {
    const double z = (phi - center) / scale;
    double v = 0.0;
    for (int j = static_cast<int>(c.size()) - 1; j >= 1; --j) v = v * z + j * c[j];
    return v / scale;
}

double PolyFit::eval_clamped(double phi) const { return (*this)(std::clamp(phi, lo, hi)); }

StepRegression::StepRegression(const double* phi, int n, int degree, Exec exec)
    : phi_(phi), n_(n), degree_(degree), exec_(exec) {
    const Eigen::VectorXd m1 = moments(phi, nullptr, n, 0.0, 1.0, 1, exec);
    center_ = m1[1] / n;
    double lo = phi[0], hi = phi[0];
    for (int i = 1; i < n; ++i) {
        lo = std::min(lo, phi[i]);
        hi = std::max(hi, phi[i]);
    }
    lo_ = lo;
    hi_ = hi;
    const Eigen::VectorXd m2 = moments(phi, nullptr, n, center_, 1.0, 2, exec);
    const double sd = std::sqrt(std::max(0.0, m2[2] / n));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(center_))) || n <= degree + 1) {
        if (degree_ > 0 && sd > 0.0) degraded_ = true;
        degree_ = 0;
        scale_ = 1.0;
    } else {
        scale_ = sd;
    }
    while (true) {
        const Eigen::VectorXd mom = moments(phi, nullptr, n, center_, scale_, 2 * degree_, exec);
        Eigen::MatrixXd G(degree_ + 1, degree_ + 1);
        for (int a = 0; a <= degree_; ++a)
            for (int b = 0; b <= degree_; ++b) G(a, b) = mom[a + b] / n;
        ldlt_.compute(G);
        const Eigen::VectorXd D = ldlt_.vectorD();
        const double dmax = D.cwiseAbs().maxCoeff(), dmin = D.minCoeff();
        if (degree_ == 0 || (ldlt_.info() == Eigen::Success && dmin > 1e-12 * dmax)) break;
        --degree_;
        degraded_ = true;
    }
    if (degraded_ && degree > 0)
        spdlog::warn("regression: basis degree reduced from {} to {}", degree, degree_);
}

PolyFit StepRegression::fit(const double* target) const {
    const Eigen::VectorXd rhs = moments(phi_, target, n_, center_, scale_, degree_, exec_) / n_;
    const Eigen::VectorXd sol = ldlt_.solve(rhs);
    PolyFit pf;
    pf.center = center_;
    pf.scale = scale_;
    pf.lo = lo_;
    pf.hi = hi_;
    pf.c.assign(sol.data(), sol.data() + sol.size());
    return pf;
}

PolyFit StepRegression::project(const double* target, double* out) const {
    PolyFit pf = fit(target);
#pragma omp parallel for schedule(static) if (exec_ == Exec::kParallel)
    for (int i = 0; i < n_; ++i) out[i] = pf(phi_[i]);
    return pf;
}

}  // namespace eqctl
