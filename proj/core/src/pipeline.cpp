#include "anchorprop/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "anchorprop/error.hpp"

namespace anchorprop {

std::vector<int> graph_layer_preset(std::string_view name) {
  if (name == "sd3-default") return {9, 18};
  if (name == "sd35-paper") return {10, 23};
  if (name == "sd35-appendix") return {23, 31};
  throw ValidationError("unknown layer preset '" + std::string(name) + "'");
}

std::string_view to_string(GroundingVariant v) {
  switch (v) {
    case GroundingVariant::kFull:
      return "full";
    case GroundingVariant::kConceptAttentionOnly:
      return "concept-attention-only";
    case GroundingVariant::kUngated:
      return "ungated";
  }
  return "full";
}

GroundingSession::GroundingSession(const AttentionBundle& bundle, const PipelineConfig& config,
                                   GroundingVariant variant)
    : grid_(bundle.grid), config_(config), variant_(variant) {
  if (config.n_steps < 0) throw ValidationError("n_steps must be non-negative");
  const std::vector<int> anchor_layers = config.anchor_layers.value_or(bundle.layers);
  anchor_signal_ = aggregate_layers(bundle, anchor_layers).a_ci_mean;
  if (variant == GroundingVariant::kConceptAttentionOnly) return;
  const AggregatedSignals signals = aggregate_layers(bundle, config.graph_layers);
  if (variant == GroundingVariant::kFull) {
    graph_ = build_hybrid_graph(signals, GateParams{config.gate_quantile, true}, config.threads);
  } else {
    graph_ = build_ungated_graph(signals, config.threads);
  }
}

Anchor GroundingSession::anchor(int concept_index) const {
  return select_anchor(anchor_signal_, concept_index);
}

std::vector<GroundingResult> GroundingSession::ground_steps(int concept_index,
                                                            std::span<const int> steps) const {
  const Anchor a = anchor(concept_index);
  std::vector<GroundingResult> out(steps.size());
  if (variant_ == GroundingVariant::kConceptAttentionOnly) {
    const auto row = anchor_signal_.row(concept_index).cast<double>().eval();
    const HeatMap heat = normalize_minmax(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), grid_, 0);
    const BinaryMask mask = binarize_mean(heat);
    for (auto& r : out) r = {a, heat, mask};
    return out;
  }
  std::vector<std::size_t> order(steps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return steps[x] < steps[y]; });
  Propagator prop(graph_, a.token_index, config_.threads);
  for (const std::size_t idx : order) {
    if (steps[idx] < 0) throw ValidationError("step count must be non-negative");
    prop.advance_to(steps[idx]);
    HeatMap heat = normalize_minmax(prop.state(), grid_, steps[idx]);
    BinaryMask mask = binarize_mean(heat);
    out[idx] = {a, std::move(heat), std::move(mask)};
  }
  return out;
}

GroundingResult GroundingSession::ground(int concept_index) const {
  const int steps[] = {config_.n_steps};
  return std::move(ground_steps(concept_index, steps).front());
}

GroundingResult ground(const AttentionBundle& bundle, int concept_index, const PipelineConfig& config) {
  if (concept_index < 0 || concept_index >= bundle.k()) {
    throw ValidationError("concept index " + std::to_string(concept_index) + " not in bundle");
  }
  return GroundingSession(bundle, config).ground(concept_index);
}

}  // namespace anchorprop
