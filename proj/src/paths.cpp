#include "eqctl/paths.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

namespace eqctl {

namespace {
constexpr std::size_t kBlock = 2048;
}

int TimeGrid::index_of(double s) const {
    const double h = dt();
    const double pos = (s - t0) / h;
    const long k = std::lround(pos);
    if (std::abs(pos - k) > 1e-9 || k < 0 || k > n_steps)
        throw std::invalid_argument(fmt::format("time {} is not a grid point of [{}, {}] / {}", s, t0, t1, n_steps));
    return static_cast<int>(k);
}

TimeGrid make_grid(double t, double T, int n_steps) {
    if (!(t < T)) throw std::invalid_argument("make_grid: need t < T");
    if (n_steps < 1) throw std::invalid_argument("make_grid: need n_steps >= 1");
    return TimeGrid{t, T, n_steps};
}

BrownianEnsemble sample_brownian(const TimeGrid& grid, int n_paths, std::uint64_t seed, Exec exec) {
    if (n_paths < 1) throw std::invalid_argument("sample_brownian: need n_paths >= 1");
    BrownianEnsemble ens{grid, n_paths, seed, {}};
    const int n = grid.n_steps;
    ens.dw.resize(static_cast<std::size_t>(n) * n_paths);
    const double sd = std::sqrt(grid.dt());
    const auto lo = static_cast<std::uint32_t>(seed);
    const auto hi = static_cast<std::uint32_t>(seed >> 32);
    double* out = ens.dw.data();
    // One engine per path, seeded from (seed, path id): the stream of a path
    // never depends on how paths are distributed over threads.
#pragma omp parallel for schedule(static) if (exec == Exec::kParallel)
    for (int p = 0; p < n_paths; ++p) {
        std::seed_seq seq{lo, hi, static_cast<std::uint32_t>(p), 0x9e3779b9u};
        std::mt19937_64 eng(seq);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k) * n_paths + p] = sd * nd(eng);
    }
    return ens;
}

std::vector<double> brownian_levels(const BrownianEnsemble& ens) {
    const int n = ens.grid.n_steps, m = ens.n_paths;
    std::vector<double> w(static_cast<std::size_t>(n + 1) * m, 0.0);
    for (int k = 0; k < n; ++k) {
        const double* d = ens.step(k);
        double* a = w.data() + static_cast<std::size_t>(k) * m;
        double* b = a + m;
        for (int p = 0; p < m; ++p) b[p] = a[p] + d[p];
    }
    return w;
}

double block_sum(std::span<const double> v, Exec exec) {
    const std::size_t n = v.size();
    const std::size_t nb = (n + kBlock - 1) / kBlock;
    std::vector<double> part(nb, 0.0);
#pragma omp parallel for schedule(static) if (exec == Exec::kParallel && nb > 1)
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t e = std::min(n, (b + 1) * kBlock);
        double s = 0.0;
        for (std::size_t i = b * kBlock; i < e; ++i) s += v[i];
        part[b] = s;
    }
    double s = 0.0;
    for (double x : part) s += x;
    return s;
}

McStat mc_mean(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) throw std::invalid_argument("mc_mean: need at least two values");
    const double mean = block_sum(values) / n;
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < n; ++i) dev[i] = (values[i] - mean) * (values[i] - mean);
    const double var = block_sum(dev) / (n - 1);
    return McStat{mean, std::sqrt(var / n), static_cast<long>(n)};
}

void write_increments_csv(const BrownianEnsemble& ens, const std::string& path) {
    auto out = fmt::output_file(path);
    out.print("path_id,step,increment\n");
    for (int p = 0; p < ens.n_paths; ++p)
        for (int k = 0; k < ens.grid.n_steps; ++k) out.print("{},{},{:.17g}\n", p, k, ens.inc(p, k));
}

}  // namespace eqctl
