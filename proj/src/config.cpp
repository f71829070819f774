#include "eqctl/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <yaml-cpp/yaml.h>

namespace eqctl {

ConfigError::ConfigError(const std::string& file, int line_, const std::string& what)
    : std::runtime_error(fmt::format("{}:{}: {}", file, line_, what)), line(line_) {}

namespace {

const std::vector<std::string> kPipelines{"simulate",     "verify",      "solve-merton",
                                          "constrained-merton", "order-check", "bsde-oracle"};

using Setter = std::function<void(ExperimentConfig&, const YAML::Node&)>;

template <class T>
Setter set(T ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const YAML::Node& n) { c.*field = n.as<T>(); };
}

template <class T>
Setter set_opt(std::optional<T> ExperimentConfig::*field) {
    return [field](ExperimentConfig& c, const YAML::Node& n) { c.*field = n.as<T>(); };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> m{
        {"pipeline", set(&ExperimentConfig::pipeline)},
        {"spec", set(&ExperimentConfig::spec)},
        {"out", set(&ExperimentConfig::out)},
        {"seed", set_opt(&ExperimentConfig::seed)},
        {"mc.seed", set_opt(&ExperimentConfig::seed)},
        {"mc.n_paths", set(&ExperimentConfig::n_paths)},
        {"mc.degree", set(&ExperimentConfig::degree)},
        {"mc.verify_paths", set(&ExperimentConfig::verify_paths)},
        {"market.r", set_opt(&ExperimentConfig::r)},
        {"market.mean_return", set_opt(&ExperimentConfig::mean_return)},
        {"market.sigma", set_opt(&ExperimentConfig::sigma)},
        {"utility.family", set(&ExperimentConfig::utility_family)},
        {"utility.lambda", set_opt(&ExperimentConfig::lambda)},
        {"utility.bequest_weight", set_opt(&ExperimentConfig::bequest_weight)},
        {"discount.family", set(&ExperimentConfig::discount_family)},
        {"discount.delta", set_opt(&ExperimentConfig::delta)},
        {"discount.K", set_opt(&ExperimentConfig::K)},
        {"discount.k", set_opt(&ExperimentConfig::k)},
        {"recursive.beta", set_opt(&ExperimentConfig::rec_beta)},
        {"recursive.gamma", set_opt(&ExperimentConfig::rec_gamma)},
        {"horizon.t", set(&ExperimentConfig::t)},
        {"horizon.T", set(&ExperimentConfig::T)},
        {"horizon.n_steps", set(&ExperimentConfig::n_steps)},
        {"horizon.x0", set(&ExperimentConfig::x0)},
        {"policy.nx_cells", set(&ExperimentConfig::nx_nodes)},
        {"policy.ns_cells", set(&ExperimentConfig::ns_cells)},
        {"policy.perturb_c", set(&ExperimentConfig::perturb_c)},
        {"policy.constant", set(&ExperimentConfig::constant_policy)},
        {"policy.zeta0", set(&ExperimentConfig::zeta0)},
        {"policy.c0", set(&ExperimentConfig::c0)},
        {"solver.damping", set(&ExperimentConfig::damping)},
        {"solver.tol", set(&ExperimentConfig::tol)},
        {"solver.max_iter", set(&ExperimentConfig::max_iter)},
        {"solver.full_hamiltonian_zeta", set(&ExperimentConfig::full_hamiltonian_zeta)},
        {"verify.per_dim", set(&ExperimentConfig::probe_per_dim)},
        {"verify.n_times", set(&ExperimentConfig::probe_times)},
        {"verify.max_violation_fraction", set(&ExperimentConfig::max_violation_fraction)},
        {"verify.rel_tol", set(&ExperimentConfig::rel_tol)},
        {"constraint.enabled", set(&ExperimentConfig::constraint_enabled)},
        {"constraint.lo", set_opt(&ExperimentConfig::constraint_lo)},
        {"constraint.hi", set_opt(&ExperimentConfig::constraint_hi)},
        {"constraint.bold_beta", set(&ExperimentConfig::bold_beta)},
        {"constraint.bold_weight", set(&ExperimentConfig::bold_weight)},
        {"constraint.binding", set(&ExperimentConfig::binding)},
        {"constraint.binding_offset", set(&ExperimentConfig::binding_offset)},
        {"constraint.rho0", set(&ExperimentConfig::rho0)},
        {"constraint.rungs", set(&ExperimentConfig::rungs)},
        {"constraint.max_sweeps", set(&ExperimentConfig::max_sweeps)},
        {"constraint.n_windows", set(&ExperimentConfig::n_windows)},
        {"constraint.values_per_dim", set(&ExperimentConfig::values_per_dim)},
        {"order.eps0", set(&ExperimentConfig::order_eps0)},
        {"order.window_start", set(&ExperimentConfig::order_window)},
        {"order.alt", set(&ExperimentConfig::order_alt)},
        {"order.k", set(&ExperimentConfig::order_k)},
    };
    return m;
}

void walk(const YAML::Node& node, const std::string& prefix, ExperimentConfig& c, const std::string& file) {
    for (const auto& kv : node) {
        const std::string key = prefix.empty() ? kv.first.as<std::string>() : prefix + "." + kv.first.as<std::string>();
        const int line = kv.first.Mark().line + 1;
        const auto it = setters().find(key);
        if (it == setters().end()) {
            if (kv.second.IsMap()) {
                walk(kv.second, key, c, file);
                continue;
            }
            throw ConfigError(file, line, "unknown key '" + key + "'");
        }
        try {
            it->second(c, kv.second);
        } catch (const YAML::Exception&) {
            throw ConfigError(file, kv.second.Mark().line + 1, "bad value for '" + key + "'");
        }
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& name) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(name, e.mark.line + 1, e.msg);
    }
    if (!root.IsMap()) throw ConfigError(name, 1, "top level must be a mapping");
    ExperimentConfig c;
    c.source = name;
    walk(root, "", c, name);

    auto line_of = [&](const char* key) {
        const YAML::Node n = root[key];
        return n ? n.Mark().line + 1 : 1;
    };
    if (c.pipeline.empty()) throw ConfigError(name, 1, "missing required key 'pipeline'");
    if (std::find(kPipelines.begin(), kPipelines.end(), c.pipeline) == kPipelines.end())
        throw ConfigError(name, line_of("pipeline"), "unknown pipeline '" + c.pipeline + "'");
    if (!c.seed) throw ConfigError(name, line_of("mc"), "missing required key 'mc.seed'");
    if (c.n_paths < 2 || c.n_steps < 1) throw ConfigError(name, line_of("mc"), "need n_paths >= 2 and n_steps >= 1");
    if (!(c.T > c.t)) throw ConfigError(name, line_of("horizon"), "need T > t");
    if (c.utility_family != "crra") throw ConfigError(name, line_of("utility"), "only utility.family = crra is supported");
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "cannot open config");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

std::string describe(const ExperimentConfig& c) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string("default"); };
    std::string s;
    auto line = [&](const char* k, const std::string& v) { s += fmt::format("# {} = {}\n", k, v); };
    line("pipeline", c.pipeline);
    line("spec", c.spec);
    line("seed", c.seed ? fmt::format("{}", *c.seed) : "unset");
    line("market.r", opt(c.r));
    line("market.mean_return", opt(c.mean_return));
    line("market.sigma", opt(c.sigma));
    line("utility.family", c.utility_family);
    line("utility.lambda", opt(c.lambda));
    line("utility.bequest_weight", opt(c.bequest_weight));
    line("discount.family", c.discount_family.empty() ? "default" : c.discount_family);
    line("discount.delta", opt(c.delta));
    line("discount.K", opt(c.K));
    line("discount.k", opt(c.k));
    line("recursive.beta", opt(c.rec_beta));
    line("recursive.gamma", opt(c.rec_gamma));
    line("horizon", fmt::format("t={} T={} n_steps={} x0={}", c.t, c.T, c.n_steps, c.x0));
    line("mc", fmt::format("n_paths={} degree={} verify_paths={}", c.n_paths, c.degree, c.verify_paths));
    line("policy", fmt::format("nx_cells={} ns_cells={} perturb_c={} zeta0={} c0={} constant=[{}]", c.nx_nodes,
                               c.ns_cells, c.perturb_c, c.zeta0, c.c0, fmt::join(c.constant_policy, ",")));
    line("solver", fmt::format("damping={} tol={} max_iter={} full_hamiltonian_zeta={}", c.damping, c.tol,
                               c.max_iter, c.full_hamiltonian_zeta));
    line("verify", fmt::format("per_dim={} n_times={} max_violation_fraction={} rel_tol={}", c.probe_per_dim,
                               c.probe_times, c.max_violation_fraction, c.rel_tol));
    line("constraint",
         fmt::format("enabled={} lo={} hi={} bold_beta={} bold_weight={} binding={} binding_offset={} rho0={} "
                     "rungs={} max_sweeps={} n_windows={} values_per_dim={}",
                     c.constraint_enabled, opt(c.constraint_lo), opt(c.constraint_hi), c.bold_beta, c.bold_weight,
                     c.binding, c.binding_offset, c.rho0, c.rungs, c.max_sweeps, c.n_windows, c.values_per_dim));
    line("order", fmt::format("eps0={} window_start={} alt=[{}] k={}", c.order_eps0, c.order_window,
                              fmt::join(c.order_alt, ","), c.order_k));
    return s;
}

}  // namespace eqctl
