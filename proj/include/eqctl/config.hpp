#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqctl {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& file, int line, const std::string& what);
    int line;
};

// All numeric defaults live here; every report echoes the full struct.
struct ExperimentConfig {
    std::string pipeline;
    std::string spec = "merton-crra-hyperbolic";
    std::string out = "out";
    std::optional<std::uint64_t> seed;

    // market / utility / discount / recursive (Merton specs; unset keys keep the
    // registry values of `spec`)
    std::optional<double> r, mean_return, sigma;
    std::string utility_family = "crra";
    std::optional<double> lambda, bequest_weight;
    std::string discount_family;  // empty: registry default
    std::optional<double> delta, K, k;
    std::optional<double> rec_beta, rec_gamma;

    double t = 0.0, T = 1.0;
    int n_steps = 200;
    double x0 = 1.0;

    int n_paths = 20000;
    int degree = 2;
    int verify_paths = 0;  // 0: same as n_paths

    int nx_nodes = 16;
    int ns_cells = 200;
    double perturb_c = 0.0;
    std::vector<double> constant_policy;  // non-Merton specs

    double damping = 0.5;
    double tol = 1e-3;
    int max_iter = 40;
    bool full_hamiltonian_zeta = true;
    double zeta0 = 0.5, c0 = 0.2;

    int probe_per_dim = 16;
    int probe_times = 8;
    double max_violation_fraction = 1e-3;
    double rel_tol = 1e-3;

    bool constraint_enabled = false;
    std::optional<double> constraint_lo, constraint_hi;
    double bold_beta = 0.1;
    double bold_weight = 1.0;
    bool binding = false;
    double binding_offset = 0.05;
    double rho0 = 0.05;
    int rungs = 5;
    int max_sweeps = 6;
    int n_windows = 4;
    int values_per_dim = 5;

    double order_eps0 = 0.2;
    double order_window = 0.3;
    std::vector<double> order_alt{1.0};
    int order_k = 1;

    std::string source;  // file the config came from
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text, const std::string& name = "<string>");

// key = value lines echoing every field, for report headers.
std::string describe(const ExperimentConfig& c);

}  // namespace eqctl
