#include <benchmark/benchmark.h>

#include "anchorprop/graph.hpp"
#include "anchorprop/propagation.hpp"
#include "anchorprop/synth.hpp"

using namespace anchorprop;

namespace {

HybridGraph graph_for(int side) {
  SceneSpec spec;
  spec.image_id = "bench";
  spec.grid = {side, side};
  spec.rng_seed = 11;
  spec.objects.push_back({"a", rect_region(spec.grid, 1, 1, side / 3, side / 3), 1, -1});
  spec.objects.push_back({"b", rect_region(spec.grid, side / 2, side / 2, side / 3, side / 3), 2, -1});
  const SyntheticScene scene = generate(spec);
  const std::vector<int> layers{9, 18};
  return build_hybrid_graph(aggregate_layers(scene.bundle, layers), GateParams{});
}

void BM_Propagate160(benchmark::State& state) {
  const HybridGraph g = graph_for(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(propagate(g, g.n / 2, 160));
  state.counters["edges"] = static_cast<double>(g.edge_count());
}

void BM_MinMaxBinarize(benchmark::State& state) {
  const HybridGraph g = graph_for(32);
  const std::vector<double> raw = propagate(g, 100, 160);
  for (auto _ : state) benchmark::DoNotOptimize(binarize_mean(normalize_minmax(raw, {32, 32}, 160)));
}

}  // namespace

BENCHMARK(BM_Propagate160)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MinMaxBinarize);
