#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "anchorprop/anchor.hpp"
#include "anchorprop/propagation.hpp"
#include "anchorprop/types.hpp"

namespace anchorprop {

/// Ground-truth concept masks for one image, all at pixel_h x pixel_w.
struct SceneAnnotation {
  std::string image_id;
  int pixel_h = 0;
  int pixel_w = 0;
  std::vector<std::string> concepts;
  std::vector<PixelMask> masks;  // parallel to concepts

  const PixelMask* find(const std::string& concept_name) const;
};

void validate_annotation(const SceneAnnotation& annotation);

/// Reads `annotations.json` and the PGM masks it references from `dir`.
std::vector<SceneAnnotation> load_annotations(const std::filesystem::path& dir);
/// Writes `annotations.json` plus one PGM per (image, concept) under `dir/masks/`.
void save_annotations(const std::filesystem::path& dir, std::span<const SceneAnnotation> annotations);

/// Bilinear interpolation with token centers as sample points, edges clamped.
PixelMap upsample_heatmap(const HeatMap& heat, int pixel_h, int pixel_w);
/// Each pixel takes the bit of the token whose patch contains the pixel center.
PixelMask upsample_mask(const BinaryMask& mask, int pixel_h, int pixel_w);

struct BinaryScores {
  double acc = 0.0;
  double iou = 0.0;
  bool both_empty = false;  // pred and gt empty within the region; iou reported as 1
  std::size_t evaluated = 0;
};

/// Pixel accuracy and IoU, restricted to `region` when given.
BinaryScores binary_metrics(const PixelMask& pred, const PixelMask& gt, const PixelMask* region = nullptr);

struct ApResult {
  double ap = 0.0;
  bool gt_empty = false;  // no positives in the region; ap reported as 0
};

/// Step-wise average precision: sum over descending unique score thresholds of
/// (recall gain) * precision.
ApResult average_precision(const PixelMap& scores, const PixelMask& gt, const PixelMask* region = nullptr);

struct NarResult {
  double nar = 0.0;
  bool zero_denominator = false;
};

/// Share of response mass on non-target masks. Pixels of m_other that overlap
/// m_c count as target.
NarResult non_target_activation_ratio(const PixelMap& heat, const PixelMask& m_c, const PixelMask& m_other);

/// One grounded (image, concept) query.
struct PairInput {
  std::string image_id;
  std::string concept_name;
  HeatMap heat;
  BinaryMask mask;
  Anchor anchor;
};

struct PairMetrics {
  std::string image_id;
  std::string concept_name;
  double acc = 0.0, iou = 0.0, ap = 0.0;
  double acc_fg = 0.0, iou_fg = 0.0, ap_fg = 0.0;
  double nar = 0.0;
  double coverage = 0.0;  // fraction of target pixels inside the predicted mask
  bool anchor_hit = false;
  int anchor_token = 0;
  bool ap_undefined = false;
  bool ap_fg_undefined = false;
  bool nar_undefined = false;
  bool iou_both_empty = false;
  bool iou_fg_both_empty = false;
  bool degenerate_heat = false;
};

struct MetricsReport {
  double acc = 0.0, miou = 0.0, map = 0.0;
  double acc_fg = 0.0, miou_fg = 0.0, map_fg = 0.0;
  double nar = 0.0;
  double anchor_hit_rate = 0.0;
  double coverage = 0.0;
  std::size_t pair_count = 0;
  std::size_t flagged_ap = 0;
  std::size_t flagged_nar = 0;
  std::size_t flagged_empty_iou = 0;
  std::size_t degenerate_heatmaps = 0;
  std::vector<PairMetrics> pairs;
};

PairMetrics evaluate_pair(const PairInput& input, const SceneAnnotation& annotation);

/// Unweighted mean over pairs.
MetricsReport summarize(std::vector<PairMetrics> pairs);

/// Evaluates every pair against the annotation with the same image_id.
/// Throws ValidationError listing any image ids or concepts without annotation.
MetricsReport evaluate_dataset(std::span<const PairInput> results, std::span<const SceneAnnotation> annotations,
                               int threads = 1);

}  // namespace anchorprop
