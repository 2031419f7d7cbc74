#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "anchorprop/analysis.hpp"
#include "anchorprop/metrics.hpp"
#include "anchorprop/tensor_io.hpp"

namespace anchorprop {

/// Generator knobs. Defaults produce scenes where same-object attention rows are
/// far more alike than rows of confusable objects, while output features of
/// confusable objects stay close (cosine `confusable_cosine`).
struct SynthParams {
  double local_sigma = 1.5;             // token units
  double local_gain_object = 3.0;       // logit bump near the query, object tokens
  double local_gain_background = 8.0;   // logit bump near the query, background tokens
  double object_bonus = 4.0;            // logit bonus on the query's own object
  double confusable_bonus = 1.0;        // logit bonus on confusable objects (< object_bonus)
  double attention_noise = 0.3;         // std of Gaussian logit noise
  int d_h = 32;
  double value_noise = 0.5;             // per-token value noise (total norm)
  double confusable_cosine = 0.7;       // cosine between confusable object embeddings
  double concept_plateau = 4.0;         // concept attention weight on the target vs background 1
  double distractor_ratio = 0.6;        // distractor plateau and peak relative to the target's
  double anchor_boost = 1.0;            // peak token weight is plateau * (1 + boost)
  double concept_noise = 0.1;           // bounded multiplicative noise half-width (log scale)
  int pixels_per_token = 16;
};

struct ObjectSpec {
  std::string concept_name;
  std::vector<int> tokens;        // region on the token grid
  std::uint64_t feature_seed = 0;
  int anchor_token = -1;          // planted concept-attention peak; -1 picks an interior token
};

struct SceneSpec {
  std::string image_id = "scene";
  GridShape grid{32, 32};
  std::vector<ObjectSpec> objects;
  std::vector<std::pair<int, int>> confusable_pairs;
  double noise_level = 1.0;  // scales every noise term
  std::uint64_t rng_seed = 0;
  std::vector<int> layers = {9, 18};
  std::vector<int> noise_layers;  // subset of layers that carry no object structure
  SynthParams params;
};

/// Throws ValidationError for empty or overlapping regions, out-of-grid tokens,
/// bad confusable indices, or noise layers missing from `layers`.
void validate_scene_spec(const SceneSpec& spec);

struct SyntheticScene {
  AttentionBundle bundle;
  SceneAnnotation annotation;
  std::vector<int> anchors;  // planted peak per object
};

/// Deterministic in spec (including rng_seed).
SyntheticScene generate(const SceneSpec& spec);

std::vector<int> rect_region(const GridShape& grid, int row0, int col0, int height, int width);
std::vector<int> ellipse_region(const GridShape& grid, double center_row, double center_col, double radius_rows,
                                double radius_cols);

/// Mean attention-row cosine for same-object pairs exceeds that of cross-object pairs.
bool rows_are_object_coherent(const AttentionBundle& bundle, const SceneAnnotation& annotation);

/// Spec for scene `index` of the standard suite: 32x32 grid, two or three objects
/// (rectangles or ellipses, one token apart), the first two always confusable.
SceneSpec standard_scene_spec(std::uint64_t master_seed, int index);

struct SuiteReport {
  std::vector<Scene> scenes;
  std::vector<std::vector<int>> anchors;
  int regenerated = 0;  // scenes re-drawn after failing the coherence check
};

/// `count` standard scenes. Scene i depends only on (master_seed, i), so the
/// output is identical for any thread count.
SuiteReport standard_suite(int count, std::uint64_t master_seed, int threads = 1);

}  // namespace anchorprop
