#pragma once

#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "anchorprop/anchor.hpp"
#include "anchorprop/graph.hpp"
#include "anchorprop/propagation.hpp"
#include "anchorprop/tensor_io.hpp"

namespace anchorprop {

inline constexpr double kDefaultGateQuantile = 0.98;
inline constexpr int kDefaultSteps = 160;

/// Named graph layer sets: "sd3-default" {9,18}, "sd35-paper" {10,23}, "sd35-appendix" {23,31}.
std::vector<int> graph_layer_preset(std::string_view name);

struct PipelineConfig {
  std::optional<std::vector<int>> anchor_layers;  // nullopt: every layer in the bundle
  std::vector<int> graph_layers = {9, 18};
  double gate_quantile = kDefaultGateQuantile;
  int n_steps = kDefaultSteps;
  int threads = 1;
  std::filesystem::path output_dir = ".";
};

/// Which response the grounding emits. kFull is the production path; the other
/// two are ablations: the raw concept-attention row, and propagation over
/// output-space affinity without the structural gate.
enum class GroundingVariant { kFull, kConceptAttentionOnly, kUngated };

std::string_view to_string(GroundingVariant v);

struct GroundingResult {
  Anchor anchor;
  HeatMap heat;
  BinaryMask mask;
};

/// Aggregated signals and the propagation graph for one bundle, shared by all
/// concept queries against it.
class GroundingSession {
 public:
  GroundingSession(const AttentionBundle& bundle, const PipelineConfig& config,
                   GroundingVariant variant = GroundingVariant::kFull);

  GroundingResult ground(int concept_index) const;
  /// Anchor plus heat/mask at each requested step count (ascending order not required).
  std::vector<GroundingResult> ground_steps(int concept_index, std::span<const int> steps) const;

  Anchor anchor(int concept_index) const;
  const HybridGraph& graph() const { return graph_; }
  const GridShape& grid() const { return grid_; }
  GroundingVariant variant() const { return variant_; }

 private:
  GridShape grid_;
  PipelineConfig config_;
  GroundingVariant variant_;
  MatrixF anchor_signal_;
  HybridGraph graph_;
};

GroundingResult ground(const AttentionBundle& bundle, int concept_index, const PipelineConfig& config);

}  // namespace anchorprop
