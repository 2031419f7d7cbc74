#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "anchorprop/graph.hpp"
#include "anchorprop/metrics.hpp"
#include "anchorprop/pipeline.hpp"
#include "anchorprop/tensor_io.hpp"

namespace anchorprop {

// ---- locality of raw self-attention ----------------------------------------

enum class DistanceMetric { kChebyshev, kEuclidean };

/// Closed distance range. A pair belongs to the first bin whose range contains it.
struct DistanceBin {
  double min_dist = 0.0;
  double max_dist = 0.0;
};

struct LocalityProfile {
  std::vector<DistanceBin> bins;
  std::vector<double> mean_weight;
  std::vector<std::size_t> pair_count;
  DistanceMetric metric = DistanceMetric::kChebyshev;
};

double patch_distance(int a, int b, const GridShape& grid, DistanceMetric metric);

/// {0}, {1}, {2}, {3-4}, {5-8}, {9-16}, {17-max}, truncated to the grid's largest distance.
std::vector<DistanceBin> default_locality_bins(const GridShape& grid, DistanceMetric metric = DistanceMetric::kChebyshev);

/// Mean a_ii_mean[i][j] over all ordered pairs whose patch distance falls in each bin.
/// Throws ValidationError unless the bins cover [0, max distance] in order without gaps.
LocalityProfile locality_profile(const MatrixF& a_ii_mean, const GridShape& grid, std::span<const DistanceBin> bins,
                                 DistanceMetric metric = DistanceMetric::kChebyshev);

/// CSV with header "bin_min,bin_max,mean_weight".
void write_locality_csv(const LocalityProfile& profile, std::ostream& out);

// ---- affinity statistics by pair category ----------------------------------

/// Concept index per token (-1 for background). A token belongs to a concept when
/// more than half of its patch pixels are in that concept's mask; if several
/// qualify, the one with the largest share wins (lowest index on ties).
std::vector<int> project_to_tokens(const SceneAnnotation& annotation, const GridShape& grid);

enum class AffinityKind { kAttention, kOutputCosine, kGated };
std::string_view to_string(AffinityKind kind);

/// Mean affinity x 100 per category over ordered pairs i != j.
struct AffinityStats {
  AffinityKind kind = AffinityKind::kAttention;
  double same_object = 0.0;
  double confusable_diff = 0.0;
  double fg_bg = 0.0;
  std::size_t same_pairs = 0;
  std::size_t confusable_pairs = 0;
  std::size_t fg_bg_pairs = 0;

  bool same_defined() const { return same_pairs > 0; }
  bool confusable_defined() const { return confusable_pairs > 0; }
  bool fg_bg_defined() const { return fg_bg_pairs > 0; }
};

AffinityStats affinity_stats(const MatrixD& affinity, std::span<const int> token_labels, AffinityKind kind);
/// Sparse affinity: absent entries count as 0.
AffinityStats affinity_stats(const CsrMatrix& affinity, std::span<const int> token_labels, AffinityKind kind);

struct AffinityReport {
  AffinityStats attention;  // row-wise attention similarity
  AffinityStats output;     // raw output-feature cosine (unclamped)
  AffinityStats gated;      // output cosine at gated positions, before row normalization
  double tau_w = 0.0;
  double gate_density = 0.0;
};

AffinityReport affinity_report(const AttentionBundle& bundle, const SceneAnnotation& annotation,
                               const PipelineConfig& config);

// ---- sweeps ------------------------------------------------------------------

/// One annotated bundle.
struct Scene {
  std::string image_id;
  AttentionBundle bundle;
  SceneAnnotation annotation;
};

struct SweepRow {
  std::string config;
  MetricsReport report;
};

/// Grounds every annotated concept of every scene and evaluates at each step count.
/// One row per entry of `steps`, in the given order.
std::vector<SweepRow> sweep_steps(std::span<const Scene> scenes, std::span<const int> steps,
                                  const PipelineConfig& config,
                                  GroundingVariant variant = GroundingVariant::kFull);

/// One evaluation per graph layer set, rows sorted by miou_fg descending.
std::vector<SweepRow> sweep_layers(std::span<const Scene> scenes, std::span<const std::vector<int>> layer_sets,
                                   const PipelineConfig& config);

/// Single-configuration convenience wrapper around sweep_steps.
MetricsReport evaluate_scenes(std::span<const Scene> scenes, const PipelineConfig& config,
                              GroundingVariant variant = GroundingVariant::kFull);

/// "L9+L18" style label.
std::string layer_set_label(std::span<const int> layers);

/// CSV with header "config,miou_fg,map_fg,nar,acc_fg".
void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);

}  // namespace anchorprop
