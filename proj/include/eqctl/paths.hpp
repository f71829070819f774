#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace eqctl {

// Serial variants are straightforward reference loops kept for testing the
// OpenMP kernels; both must produce identical results.
enum class Exec { kSerial, kParallel };

struct TimeGrid {
    double t0 = 0.0;
    double t1 = 1.0;
    int n_steps = 1;

    double dt() const { return (t1 - t0) / n_steps; }
    double time(int k) const { return k == n_steps ? t1 : t0 + k * dt(); }
    // Index of the grid point equal to s (within 1e-9·dt); throws if s is off-grid.
    int index_of(double s) const;
    bool same_as(const TimeGrid& o) const {
        return t0 == o.t0 && t1 == o.t1 && n_steps == o.n_steps;
    }
};

TimeGrid make_grid(double t, double T, int n_steps);

// Wiener increments, time-major: dw[k * n_paths + p].
struct BrownianEnsemble {
    TimeGrid grid;
    int n_paths = 0;
    std::uint64_t seed = 0;
    std::vector<double> dw;

    double inc(int p, int k) const { return dw[static_cast<std::size_t>(k) * n_paths + p]; }
    const double* step(int k) const { return dw.data() + static_cast<std::size_t>(k) * n_paths; }
};

BrownianEnsemble sample_brownian(const TimeGrid& grid, int n_paths, std::uint64_t seed,
                                 Exec exec = Exec::kParallel);

// Cumulative W(s_k) - W(t), time-major (n_steps+1) x n_paths.
std::vector<double> brownian_levels(const BrownianEnsemble& ens);

struct McStat {
    double mean = 0.0;
    double std_error = 0.0;
    long n = 0;
};

McStat mc_mean(std::span<const double> values);

// Sum with a fixed block decomposition, so the result does not depend on
// the number of threads.
double block_sum(std::span<const double> values, Exec exec = Exec::kParallel);

void write_increments_csv(const BrownianEnsemble& ens, const std::string& path);

}  // namespace eqctl
