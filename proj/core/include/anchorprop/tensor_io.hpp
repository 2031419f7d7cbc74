#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "anchorprop/types.hpp"

namespace anchorprop {

enum class Trajectory { kGeneration, kInversion };

std::string_view to_string(Trajectory t);
Trajectory parse_trajectory(std::string_view s);

struct BundleMeta {
  std::string model;
  int timestep = 0;
  Trajectory trajectory = Trajectory::kGeneration;
  std::string prompt;
};

/// Attention captured at one transformer layer.
struct LayerTensors {
  MatrixF a_ci;  // K x N concept-to-image attention, softmax rows
  MatrixF a_ii;  // N x N image self-attention, softmax rows
  MatrixF o_ii;  // N x d_h self-attention output features
};

/// Attention signals for one image at one timestep. `tensors[i]` belongs to `layers[i]`.
struct AttentionBundle {
  GridShape grid;
  std::vector<std::string> concepts;
  std::vector<int> layers;
  int d_h = 0;
  BundleMeta meta;
  std::vector<LayerTensors> tensors;

  int n() const { return grid.n(); }
  int k() const { return static_cast<int>(concepts.size()); }
  /// Position of `layer` in `layers`, or -1.
  int layer_position(int layer) const;
  const LayerTensors& layer(int layer) const;
  /// Index of `name` in `concepts`, or -1.
  int concept_index(std::string_view name) const;
};

/// Row-sum tolerance applied to softmax rows on validation.
inline constexpr double kRowSumTolerance = 1e-3;

/// Checks every bundle invariant. Throws ValidationError naming the offending
/// tensor key ("a_ii/layer_9") and row.
void validate_bundle(const AttentionBundle& bundle);

AttentionBundle load_bundle(const std::filesystem::path& path);

/// Validates, then writes the archive. Floats are stored verbatim.
void save_bundle(const AttentionBundle& bundle, const std::filesystem::path& path);

/// Archive entry name for one tensor, e.g. "a_ci/layer_9.npy".
std::string tensor_entry_name(std::string_view kind, int layer);

struct AggregatedSignals {
  MatrixF a_ci_mean;
  MatrixF a_ii_mean;
  MatrixF o_ii_mean;
  std::vector<int> layer_set;  // sorted ascending
};

/// Elementwise mean over `layer_set`. Accumulates in double in ascending layer
/// order so the result does not depend on the order of `layer_set`.
AggregatedSignals aggregate_layers(const AttentionBundle& bundle, std::span<const int> layer_set);

}  // namespace anchorprop
