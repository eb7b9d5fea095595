// Serial reference vs OpenMP kernels for the layer map and the single-shot solver.

#include <map>

#include <benchmark/benchmark.h>

#include "dualfilter/dual_filter.hpp"

using namespace dualfilter;

namespace {

struct Problem {
  HmmModel model;
  TokenSequence tokens;
  LayerState start;
};

const Problem& problem(int d, int horizon) {
  static std::map<std::pair<int, int>, Problem> cache;
  auto it = cache.find({d, horizon});
  if (it == cache.end()) {
    Rng rng(7);
    HmmModel model(Vector::Constant(d, 1.0 / d), random_stochastic_matrix(d, d, 1.0, rng),
                   random_stochastic_matrix(d, 17, 0.5, rng));
    TokenSequence tokens = sample_path(model, horizon, 1).tokens;
    LayerState start = init_rho(model, tokens).state;
    it = cache.emplace(std::make_pair(d, horizon),
                       Problem{std::move(model), std::move(tokens), std::move(start)})
             .first;
  }
  return it->second;
}

Execution execution_of(const benchmark::State& state) {
  return state.range(2) == 0 ? Execution::serial : Execution::parallel;
}

void BM_LayerMap(benchmark::State& state) {
  const Problem& p = problem(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  LayerMapOptions options;
  options.execution = execution_of(state);
  options.keep_dual_functions = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(layer_map(p.model, p.tokens, p.start, options));
  }
}

void BM_SingleShot(benchmark::State& state) {
  const Problem& p = problem(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(single_shot(p.model, p.tokens, {execution_of(state)}));
  }
}

}  // namespace

BENCHMARK(BM_LayerMap)
    ->ArgNames({"d", "T", "parallel"})
    ->ArgsProduct({{64, 256}, {64}, {0, 1}})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SingleShot)
    ->ArgNames({"d", "T", "parallel"})
    ->ArgsProduct({{64, 128}, {32}, {0, 1}})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
