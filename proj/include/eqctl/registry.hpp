#pragma once

#include <string>
#include <vector>

#include "eqctl/bsde.hpp"
#include "eqctl/merton.hpp"
#include "eqctl/problem.hpp"

namespace eqctl {

// Built-in problems, sorted by name.
std::vector<std::string> list_specs();

// b = 0.2 sin x + 0.5u, σ = (0.3 + 0.2u)(1 + 0.3 sin x), f = ½(x² + u²) − 0.1y + 0.2z, h = ½x².
ProblemSpec generic_toy();

// b = a x + b1 u, σ = c x + d u, f = ½(Q x² + R u²) − δ y + γ z, h = ½G x², U = [−1, 1].
struct LqParams {
    double a = 0.1, b1 = 0.5, c = 0.3, d = 0.4;
    double Q = 1.0, R = 0.5, G = 1.0;
    double delta = 0.2, gamma = 0.25;
};
ProblemSpec lq_toy(const LqParams& prm = {});

// dΞ = −(α + βΞ + γΘ)ds + ΘdW, Ξ(T) = a + b W(T) + c sin W(T), state X = W.
struct LinearOracleCase {
    double alpha = 0, beta = 0, gamma = 0;
    double a = 0, b = 0, c = 0;

    double closed_form(double T) const;
};
std::vector<LinearOracleCase> linear_oracle_cases();
ProblemSpec linear_bsde_oracle(const LinearOracleCase& cs);

// Shipped Merton parameter sets: hyperbolic K = 1 with γ = 0.32, and the
// exponential (classical) reduction with γ = 0, β = δ = 0.1, σ = 0.4.
merton::Setup merton_setup(const std::string& name);

ProblemSpec spec_by_name(const std::string& name);

}  // namespace eqctl
