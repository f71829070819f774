#include "eqctl/registry.hpp"

#include <cmath>
#include <stdexcept>

namespace eqctl {

std::vector<std::string> list_specs() {
    return {"generic-toy", "linear-bsde-oracle", "lq-toy", "merton-crra-exponential", "merton-crra-hyperbolic"};
}

ProblemSpec generic_toy() {
    ProblemSpec s;
    s.name = "generic-toy";
    s.control_set = Box{{-1.0}, {1.0}};
    s.b = [](double, double x, UView u) { return 0.2 * std::sin(x) + 0.5 * u[0]; };
    s.sigma = [](double, double x, UView u) { return (0.3 + 0.2 * u[0]) * (1.0 + 0.3 * std::sin(x)); };
    s.b_x = [](double, double x, UView) { return 0.2 * std::cos(x); };
    s.b_xx = [](double, double x, UView) { return -0.2 * std::sin(x); };
    s.sigma_x = [](double, double x, UView u) { return (0.3 + 0.2 * u[0]) * 0.3 * std::cos(x); };
    s.sigma_xx = [](double, double x, UView u) { return -(0.3 + 0.2 * u[0]) * 0.3 * std::sin(x); };
    s.f = [](double, double x, UView u, double y, double z) {
        return 0.5 * (x * x + u[0] * u[0]) - 0.1 * y + 0.2 * z;
    };
    s.grad_f = [](double, double x, UView, double, double) { return Vec3{x, -0.1, 0.2}; };
    s.hess_f = [](double, double, UView, double, double) {
        Mat3 H{};
        H[0][0] = 1.0;
        return H;
    };
    s.h = [](double x) { return 0.5 * x * x; };
    s.h_x = [](double x) { return x; };
    s.h_xx = [](double) { return 1.0; };
    s.linear_driver = LinearDriver{[](double) { return -0.1; }, [](double) { return 0.2; }};
    return s;
}

ProblemSpec lq_toy(const LqParams& k) {
    ProblemSpec s;
    s.name = "lq-toy";
    s.control_set = Box{{-1.0}, {1.0}};
    s.b = [k](double, double x, UView u) { return k.a * x + k.b1 * u[0]; };
    s.sigma = [k](double, double x, UView u) { return k.c * x + k.d * u[0]; };
    s.b_x = [k](double, double, UView) { return k.a; };
    s.b_xx = [](double, double, UView) { return 0.0; };
    s.sigma_x = [k](double, double, UView) { return k.c; };
    s.sigma_xx = [](double, double, UView) { return 0.0; };
    s.f = [k](double, double x, UView u, double y, double z) {
        return 0.5 * (k.Q * x * x + k.R * u[0] * u[0]) - k.delta * y + k.gamma * z;
    };
    s.grad_f = [k](double, double x, UView, double, double) { return Vec3{k.Q * x, -k.delta, k.gamma}; };
    s.hess_f = [k](double, double, UView, double, double) {
        Mat3 H{};
        H[0][0] = k.Q;
        return H;
    };
    s.h = [k](double x) { return 0.5 * k.G * x * x; };
    s.h_x = [k](double x) { return k.G * x; };
    s.h_xx = [k](double) { return k.G; };
    s.linear_driver = LinearDriver{[k](double) { return -k.delta; }, [k](double) { return k.gamma; }};
    return s;
}

double LinearOracleCase::closed_form(double T) const {
    // Ξ(t) = E[η(T)ξ + ∫η α ds]; under the η-measure W(T) ~ N(γT, T).
    const double eb = std::exp(beta * T);
    const double term = a + b * gamma * T + c * std::sin(gamma * T) * std::exp(-0.5 * T);
    const double run = beta == 0.0 ? alpha * T : alpha * (eb - 1.0) / beta;
    return eb * term + run;
}

std::vector<LinearOracleCase> linear_oracle_cases() {
    return {
        {1.0, 0.0, 0.0, 0.5, 1.0, 0.0},
        {0.0, 0.3, 0.0, 1.0, 0.5, 0.5},
        {0.5, -0.2, 0.4, 1.0, 1.0, 0.0},
        {0.2, 0.1, -0.3, 2.0, 0.0, 1.0},
        {1.0, 0.5, 0.6, 0.0, 1.0, 1.0},
        {0.0, 0.0, 0.8, 1.0, 0.5, 2.0},
    };
}

ProblemSpec linear_bsde_oracle(const LinearOracleCase& cs) {
    ProblemSpec s;
    s.name = "linear-bsde-oracle";
    s.control_set = Box{{0.0}, {0.0}};
    s.b = [](double, double, UView) { return 0.0; };
    s.sigma = [](double, double, UView) { return 1.0; };
    s.b_x = s.b_xx = s.sigma_x = s.sigma_xx = [](double, double, UView) { return 0.0; };
    s.f = [cs](double, double, UView, double y, double z) { return cs.alpha + cs.beta * y + cs.gamma * z; };
    s.grad_f = [cs](double, double, UView, double, double) { return Vec3{0.0, cs.beta, cs.gamma}; };
    s.hess_f = [](double, double, UView, double, double) { return Mat3{}; };
    s.h = [cs](double x) { return cs.a + cs.b * x + cs.c * std::sin(x); };
    s.h_x = [cs](double x) { return cs.b + cs.c * std::cos(x); };
    s.h_xx = [cs](double x) { return -cs.c * std::sin(x); };
    s.linear_driver = LinearDriver{[cs](double) { return cs.beta; }, [cs](double) { return cs.gamma; }};
    return s;
}

merton::Setup merton_setup(const std::string& name) {
    merton::Setup st;
    st.utility = merton::crra_utility(0.5);
    st.bequest = merton::crra_utility(0.5, 2.0);
    if (name == "merton-crra-hyperbolic") {
        st.market = {0.03, 0.08, 0.2};
        st.discount = st.discount_hat = merton::hyperbolic_discount(1.0);
        st.recursive = merton::constant_recursive(0.1, 0.32);
    } else if (name == "merton-crra-exponential") {
        st.market = {0.03, 0.08, 0.4};
        st.discount = st.discount_hat = merton::exponential_discount(0.1);
        st.recursive = merton::constant_recursive(0.1, 0.0);
    } else {
        throw std::invalid_argument("unknown Merton spec: " + name);
    }
    return st;
}

ProblemSpec spec_by_name(const std::string& name) {
    if (name == "generic-toy") return generic_toy();
    if (name == "lq-toy") return lq_toy();
    if (name == "linear-bsde-oracle") return linear_bsde_oracle(linear_oracle_cases().front());
    if (name == "merton-crra-hyperbolic" || name == "merton-crra-exponential")
        return merton::build_merton_spec(merton_setup(name), constant_policy({0.5, 0.2}));
    throw std::invalid_argument("unknown spec: " + name);
}

}  // namespace eqctl
