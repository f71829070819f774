// Batch runner: eqctl_cli --config FILE [--out DIR] [--seed N] [--threads N]
//               eqctl_cli --list
#include <cstdint>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <omp.h>
#include <spdlog/spdlog.h>

#include "eqctl/config.hpp"
#include "eqctl/pipelines.hpp"
#include "eqctl/registry.hpp"

int main(int argc, char** argv) {
    CLI::App app{"equilibrium control experiment runner"};
    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    int threads = 0;
    bool list = false, quiet = false;
    app.add_option("--config", config_path, "experiment config (YAML)");
    app.add_option("--out", out_dir, "output directory (overrides config)");
    auto* seed_opt = app.add_option("--seed", seed, "seed (overrides config)");
    app.add_option("--threads", threads, "OpenMP threads");
    app.add_flag("--list", list, "list built-in specs");
    app.add_flag("-q,--quiet", quiet, "warnings only");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (quiet) spdlog::set_level(spdlog::level::warn);

    if (list) {
        for (const auto& s : eqctl::list_specs()) fmt::print("{}\n", s);
        return 0;
    }
    if (config_path.empty()) {
        fmt::print(stderr, "error: --config is required\n");
        return 2;
    }
    if (threads > 0) omp_set_num_threads(threads);

    eqctl::ExperimentConfig cfg;
    try {
        cfg = eqctl::load_config(config_path);
    } catch (const eqctl::ConfigError& e) {
        // Missing seed is acceptable when given on the command line.
        if (seed_opt->count() && std::string(e.what()).find("mc.seed") != std::string::npos) {
            try {
                cfg = eqctl::parse_config(
                    [&] {
                        std::ifstream in(config_path);
                        std::stringstream ss;
                        ss << in.rdbuf() << "\nseed: " << seed << "\n";
                        return ss.str();
                    }(),
                    config_path);
            } catch (const std::exception& e2) {
                fmt::print(stderr, "config error: {}\n", e2.what());
                return 2;
            }
        } else {
            fmt::print(stderr, "config error: {}\n", e.what());
            return 2;
        }
    }
    if (seed_opt->count()) cfg.seed = seed;
    if (out_dir.empty()) out_dir = cfg.out;

    try {
        const int rc = eqctl::run_pipeline(cfg, out_dir);
        fmt::print("{}: {}\n", cfg.pipeline, rc == 0 ? "pass" : "fail");
        return rc;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
}
