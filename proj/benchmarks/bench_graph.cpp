#include <benchmark/benchmark.h>

#include "anchorprop/graph.hpp"
#include "anchorprop/rng.hpp"
#include "anchorprop/synth.hpp"

using namespace anchorprop;

namespace {

AggregatedSignals signals_for(int side) {
  SceneSpec spec;
  spec.image_id = "bench";
  spec.grid = {side, side};
  spec.rng_seed = static_cast<std::uint64_t>(side);
  const int q = side / 4;
  spec.objects.push_back({"a", rect_region(spec.grid, 1, 1, q + 2, q + 2), 1, -1});
  spec.objects.push_back({"b", rect_region(spec.grid, 2 * q, 2 * q, q + 1, q + 3), 2, -1});
  spec.confusable_pairs = {{0, 1}};
  const SyntheticScene scene = generate(spec);
  const std::vector<int> layers{9, 18};
  return aggregate_layers(scene.bundle, layers);
}

void BM_RowSimilarity(benchmark::State& state) {
  const AggregatedSignals s = signals_for(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(row_similarity(s.a_ii_mean));
  state.counters["N"] = static_cast<double>(s.a_ii_mean.rows());
}

void BM_HybridGraph(benchmark::State& state) {
  const AggregatedSignals s = signals_for(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_hybrid_graph(s, GateParams{}));
  state.counters["N"] = static_cast<double>(s.a_ii_mean.rows());
}

void BM_Percentile(benchmark::State& state) {
  Rng rng(3);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (double& x : v) x = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(percentile_threshold(v, 0.98));
}

}  // namespace

BENCHMARK(BM_RowSimilarity)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HybridGraph)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Percentile)->Arg(1 << 16)->Arg(1 << 22)->Unit(benchmark::kMillisecond);
