#include "anchorprop/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "anchorprop/error.hpp"
#include "anchorprop/parallel.hpp"

namespace anchorprop {
namespace {
constexpr std::size_t kGatherBlock = 256;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Propagator::Propagator(const HybridGraph& graph, int seed_token, int threads)
    : graph_(&graph), threads_(threads) {
  if (seed_token < 0 || seed_token >= graph.n) {
    throw ValidationError("seed token " + std::to_string(seed_token) + " outside [0, " +
                          std::to_string(graph.n) + ")");
  }
  state_.assign(static_cast<std::size_t>(graph.n), 0.0);
  next_.assign(static_cast<std::size_t>(graph.n), 0.0);
  state_[static_cast<std::size_t>(seed_token)] = 1.0;
}

void Propagator::step() {
  const HybridGraph& g = *graph_;
  const auto blocks = make_blocks(static_cast<std::size_t>(g.n), kGatherBlock);
  parallel_for(blocks.size(), threads_, [&](std::size_t b) {
    for (std::size_t j = blocks[b].begin; j < blocks[b].end; ++j) {
      double acc = 0.0;
      for (std::int64_t e = g.in_ptr[j]; e < g.in_ptr[j + 1]; ++e) {
        const auto slot = static_cast<std::size_t>(e);
        acc += g.in_weight[slot] * state_[static_cast<std::size_t>(g.in_src[slot])];
      }
      next_[j] = acc;
    }
  });
  state_.swap(next_);
  ++steps_;
}

void Propagator::advance_to(int n_steps) {
  if (n_steps < steps_) throw ValidationError("propagation cannot step backwards");
  while (steps_ < n_steps) step();
}

std::vector<double> propagate(const HybridGraph& graph, int seed_token, int n_steps, int threads) {
  if (n_steps < 0) throw ValidationError("n_steps must be non-negative");
  Propagator p(graph, seed_token, threads);
  p.advance_to(n_steps);
  return p.state();
}

HeatMap normalize_minmax(std::span<const double> raw, const GridShape& grid, int steps_used) {
  HeatMap h;
  h.grid = grid;
  h.steps_used = steps_used;
  h.values.assign(raw.size(), 0.0);
  if (raw.empty()) {
    h.degenerate = true;
    return h;
  }
  for (const double v : raw) {
    if (!std::isfinite(v)) throw ValidationError("normalize_minmax: non-finite response");
  }
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) {
    h.degenerate = true;
    return h;
  }
  const double span = hi - lo;
  for (std::size_t i = 0; i < raw.size(); ++i) h.values[i] = (raw[i] - lo) / span;
  h.values[static_cast<std::size_t>(lo_it - raw.begin())] = 0.0;
  h.values[static_cast<std::size_t>(hi_it - raw.begin())] = 1.0;
  return h;
}

BinaryMask binarize_mean(const HeatMap& heat) {
  BinaryMask m;
  m.grid = heat.grid;
  m.bits.assign(heat.values.size(), 0);
  if (heat.degenerate || heat.values.empty()) {
    m.degenerate = true;
    return m;
  }
  double sum = 0.0;
  for (const double v : heat.values) sum += v;
  m.threshold_used = sum / static_cast<double>(heat.values.size());
  for (std::size_t i = 0; i < heat.values.size(); ++i) {
    m.bits[i] = heat.values[i] > m.threshold_used ? 1 : 0;
  }
  return m;
}

}  // namespace anchorprop
