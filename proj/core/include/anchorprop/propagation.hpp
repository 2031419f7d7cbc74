#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "anchorprop/graph.hpp"
#include "anchorprop/types.hpp"

namespace anchorprop {

/// Response on the token grid, min-max normalized to [0, 1].
struct HeatMap {
  std::vector<double> values;
  GridShape grid;
  int steps_used = 0;
  bool degenerate = false;  // raw response was constant; values are all zero
};

struct BinaryMask {
  std::vector<std::uint8_t> bits;
  double threshold_used = 0.0;
  GridShape grid;
  bool degenerate = false;

  std::size_t count() const;
};

/// Iterates s <- W^T s from a one-hot seed. Accumulates in double; each step
/// gathers incoming edges per target in ascending source order, so the state is
/// bit-identical for any thread count.
class Propagator {
 public:
  Propagator(const HybridGraph& graph, int seed_token, int threads = 1);

  void step();
  void advance_to(int n_steps);
  int steps() const { return steps_; }
  const std::vector<double>& state() const { return state_; }

 private:
  const HybridGraph* graph_;
  int threads_;
  int steps_ = 0;
  std::vector<double> state_;
  std::vector<double> next_;
};

/// s^(n_steps) for a one-hot seed.
std::vector<double> propagate(const HybridGraph& graph, int seed_token, int n_steps, int threads = 1);

HeatMap normalize_minmax(std::span<const double> raw, const GridShape& grid, int steps_used = 0);

/// Strict threshold at the mean of all values. Degenerate heat maps give an empty mask.
BinaryMask binarize_mean(const HeatMap& heat);

}  // namespace anchorprop
