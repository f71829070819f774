#include <benchmark/benchmark.h>

#include "eqctl/bsde.hpp"
#include "eqctl/forward_sde.hpp"
#include "eqctl/paths.hpp"
#include "eqctl/registry.hpp"

using namespace eqctl;

namespace {

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::kParallel : Exec::kSerial; }

void BM_SampleBrownian(benchmark::State& st) {
    const TimeGrid g = make_grid(0.0, 1.0, 200);
    for (auto _ : st) benchmark::DoNotOptimize(sample_brownian(g, 20000, 11, exec_of(st)).dw.data());
}

void BM_SimulateState(benchmark::State& st) {
    const TimeGrid g = make_grid(0.0, 1.0, 200);
    const BrownianEnsemble ens = sample_brownian(g, 20000, 11);
    const ProblemSpec spec = generic_toy();
    const ControlPath u = constant_control(g, ens.n_paths, {0.3});
    for (auto _ : st) benchmark::DoNotOptimize(simulate_state(spec, u, 0.5, ens, exec_of(st)).x.data());
}

void BM_LinearBsde(benchmark::State& st) {
    const TimeGrid g = make_grid(0.0, 1.0, 200);
    const BrownianEnsemble ens = sample_brownian(g, 20000, 11);
    const std::vector<double> W = brownian_levels(ens);
    LinearBsdeSpec ls;
    ls.alpha = [](int, int) { return 0.5; };
    ls.beta = [](int, int) { return -0.2; };
    ls.gamma = [](int, int) { return 0.4; };
    ls.xi = [&](int p) { return W[static_cast<std::size_t>(g.n_steps) * ens.n_paths + p]; };
    BsdeOptions opt;
    opt.exec = exec_of(st);
    for (auto _ : st) benchmark::DoNotOptimize(solve_linear_bsde(ls, ens, opt).Y.data());
}

void BM_BlockSum(benchmark::State& st) {
    std::vector<double> v(1 << 22);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + i);
    for (auto _ : st) benchmark::DoNotOptimize(block_sum(v, exec_of(st)));
}

}  // namespace

BENCHMARK(BM_SampleBrownian)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulateState)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LinearBsde)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BlockSum)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
