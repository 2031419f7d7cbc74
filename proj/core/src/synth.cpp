#include "anchorprop/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "anchorprop/error.hpp"
#include "anchorprop/parallel.hpp"
#include "anchorprop/rng.hpp"

namespace anchorprop {
namespace {

constexpr std::uint64_t kStreamAttention = 1;
constexpr std::uint64_t kStreamConcept = 2;
constexpr std::uint64_t kStreamValues = 3;
constexpr std::uint64_t kStreamAnchors = 4;

const std::array<const char*, 24> kConceptNames = {
    "cat",    "dog",   "fox",   "wolf",  "horse", "zebra",  "cup",    "mug",
    "apple",  "orange", "lemon", "pear",  "sheep", "goat",   "car",    "truck",
    "chair",  "stool", "duck",  "goose", "vase",  "bottle", "laptop", "tablet"};

using VecD = Eigen::VectorXd;

VecD random_unit(Rng& rng, int d) {
  VecD v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.normal();
  return v / v.norm();
}

/// Unit vector at cosine `c` to `base`.
VecD correlated_unit(Rng& rng, const VecD& base, double c) {
  VecD u = random_unit(rng, static_cast<int>(base.size()));
  u -= u.dot(base) * base;
  u /= u.norm();
  return c * base + std::sqrt(std::max(0.0, 1.0 - c * c)) * u;
}

void softmax_row(std::vector<double>& logits, float* out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = static_cast<float>(logits[j] / sum);
}

bool is_confusable(const std::vector<std::vector<bool>>& conf, int a, int b) {
  return a >= 0 && b >= 0 && conf[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
}

int pick_interior(const ObjectSpec& obj, const std::vector<int>& labels, int label, const GridShape& grid, Rng& rng) {
  std::vector<int> interior;
  for (const int t : obj.tokens) {
    const int r = grid.row_of(t), c = grid.col_of(t);
    bool inside = true;
    for (const auto& [dr, dc] : std::array<std::pair<int, int>, 4>{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}}) {
      const int rr = r + dr, cc = c + dc;
      if (rr < 0 || rr >= grid.h || cc < 0 || cc >= grid.w || labels[static_cast<std::size_t>(rr * grid.w + cc)] != label) {
        inside = false;
        break;
      }
    }
    if (inside) interior.push_back(t);
  }
  const std::vector<int>& pool = interior.empty() ? obj.tokens : interior;
  std::vector<int> sorted = pool;
  std::sort(sorted.begin(), sorted.end());
  return sorted[static_cast<std::size_t>(rng.integer(0, static_cast<int>(sorted.size()) - 1))];
}

}  // namespace

std::vector<int> rect_region(const GridShape& grid, int row0, int col0, int height, int width) {
  std::vector<int> out;
  for (int r = row0; r < row0 + height; ++r) {
    for (int c = col0; c < col0 + width; ++c) {
      if (r >= 0 && r < grid.h && c >= 0 && c < grid.w) out.push_back(r * grid.w + c);
    }
  }
  return out;
}

std::vector<int> ellipse_region(const GridShape& grid, double center_row, double center_col, double radius_rows,
                                double radius_cols) {
  std::vector<int> out;
  for (int r = 0; r < grid.h; ++r) {
    for (int c = 0; c < grid.w; ++c) {
      const double dr = (r - center_row) / radius_rows;
      const double dc = (c - center_col) / radius_cols;
      if (dr * dr + dc * dc <= 1.0) out.push_back(r * grid.w + c);
    }
  }
  return out;
}

void validate_scene_spec(const SceneSpec& spec) {
  check_grid(spec.grid);
  if (spec.objects.empty()) throw ValidationError("scene spec has no objects");
  if (spec.noise_level < 0.0) throw ValidationError("noise_level must be non-negative");
  if (spec.layers.empty()) throw ValidationError("scene spec has no layers");
  if (spec.params.d_h < 1) throw ValidationError("d_h must be positive");
  if (spec.params.pixels_per_token < 1) throw ValidationError("pixels_per_token must be positive");
  std::vector<int> owner(static_cast<std::size_t>(spec.grid.n()), -1);
  std::set<std::string> names;
  for (std::size_t o = 0; o < spec.objects.size(); ++o) {
    const ObjectSpec& obj = spec.objects[o];
    if (obj.tokens.empty()) throw ValidationError("object '" + obj.concept_name + "' is empty");
    if (!names.insert(obj.concept_name).second) throw ValidationError("duplicate concept '" + obj.concept_name + "'");
    for (const int t : obj.tokens) {
      if (t < 0 || t >= spec.grid.n()) throw ValidationError("object '" + obj.concept_name + "' leaves the grid");
      if (owner[static_cast<std::size_t>(t)] >= 0) {
        throw ValidationError("objects '" + spec.objects[static_cast<std::size_t>(owner[static_cast<std::size_t>(t)])].concept_name +
                              "' and '" + obj.concept_name + "' overlap");
      }
      owner[static_cast<std::size_t>(t)] = static_cast<int>(o);
    }
  }
  for (std::size_t o = 0; o < spec.objects.size(); ++o) {
    const int a = spec.objects[o].anchor_token;
    if (a >= spec.grid.n() || (a >= 0 && owner[static_cast<std::size_t>(a)] != static_cast<int>(o))) {
      throw ValidationError("planted anchor of '" + spec.objects[o].concept_name + "' is outside its object");
    }
  }
  const auto count = static_cast<int>(spec.objects.size());
  for (const auto& [a, b] : spec.confusable_pairs) {
    if (a < 0 || b < 0 || a >= count || b >= count || a == b) throw ValidationError("invalid confusable pair");
  }
  for (const int l : spec.noise_layers) {
    if (std::find(spec.layers.begin(), spec.layers.end(), l) == spec.layers.end()) {
      throw ValidationError("noise layer " + std::to_string(l) + " not among layers");
    }
  }
}

SyntheticScene generate(const SceneSpec& spec) {
  validate_scene_spec(spec);
  const SynthParams& p = spec.params;
  const GridShape grid = spec.grid;
  const int n = grid.n();
  const int k = static_cast<int>(spec.objects.size());
  const double noise = spec.noise_level;

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int o = 0; o < k; ++o) {
    for (const int t : spec.objects[static_cast<std::size_t>(o)].tokens) labels[static_cast<std::size_t>(t)] = o;
  }
  std::vector<std::vector<bool>> conf(static_cast<std::size_t>(k), std::vector<bool>(static_cast<std::size_t>(k), false));
  for (const auto& [a, b] : spec.confusable_pairs) {
    conf[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = true;
    conf[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = true;
  }

  SyntheticScene out;
  Rng anchor_rng(derive_seed(spec.rng_seed, kStreamAnchors));
  for (int o = 0; o < k; ++o) {
    const ObjectSpec& obj = spec.objects[static_cast<std::size_t>(o)];
    out.anchors.push_back(obj.anchor_token >= 0 ? obj.anchor_token : pick_interior(obj, labels, o, grid, anchor_rng));
  }

  // Object embeddings: confusable objects are drawn at a fixed cosine to their
  // first confusable predecessor; others are independent.
  std::vector<VecD> embeddings;
  for (int o = 0; o < k; ++o) {
    Rng er(derive_seed(spec.objects[static_cast<std::size_t>(o)].feature_seed, 0));
    int partner = -1;
    for (int q = 0; q < o && partner < 0; ++q) {
      if (conf[static_cast<std::size_t>(o)][static_cast<std::size_t>(q)]) partner = q;
    }
    embeddings.push_back(partner >= 0 ? correlated_unit(er, embeddings[static_cast<std::size_t>(partner)], p.confusable_cosine)
                                      : random_unit(er, p.d_h));
  }
  Rng bg_rng(derive_seed(spec.rng_seed, 99));
  const VecD background = random_unit(bg_rng, p.d_h);

  AttentionBundle& b = out.bundle;
  b.grid = grid;
  b.layers = spec.layers;
  b.d_h = p.d_h;
  b.meta = {"synthetic", 0, Trajectory::kGeneration, ""};
  for (const ObjectSpec& obj : spec.objects) b.concepts.push_back(obj.concept_name);
  for (std::size_t i = 0; i < b.concepts.size(); ++i) b.meta.prompt += (i == 0 ? "a photo of " : " and ") + b.concepts[i];

  // Local kernel depends only on the offset.
  const double inv_two_sigma2 = 1.0 / (2.0 * p.local_sigma * p.local_sigma);
  std::vector<double> kernel(static_cast<std::size_t>(grid.h * grid.w));
  for (int dr = 0; dr < grid.h; ++dr) {
    for (int dc = 0; dc < grid.w; ++dc) {
      kernel[static_cast<std::size_t>(dr * grid.w + dc)] = std::exp(-(dr * dr + dc * dc) * inv_two_sigma2);
    }
  }

  for (const int layer : spec.layers) {
    const bool structured = std::find(spec.noise_layers.begin(), spec.noise_layers.end(), layer) == spec.noise_layers.end();
    LayerTensors t;
    Rng arng(derive_seed(spec.rng_seed, kStreamAttention * 1000003ull + static_cast<std::uint64_t>(layer)));
    t.a_ii.resize(n, n);
    std::vector<double> logits(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int li = labels[static_cast<std::size_t>(i)];
      const double gain = (structured && li >= 0) ? p.local_gain_object : p.local_gain_background;
      const int ri = grid.row_of(i), ci = grid.col_of(i);
      for (int j = 0; j < n; ++j) {
        const int lj = labels[static_cast<std::size_t>(j)];
        const int dr = std::abs(ri - grid.row_of(j)), dc = std::abs(ci - grid.col_of(j));
        double v = gain * kernel[static_cast<std::size_t>(dr * grid.w + dc)];
        if (structured) {
          if (li >= 0 && li == lj) v += p.object_bonus;
          if (li != lj && is_confusable(conf, li, lj)) v += p.confusable_bonus;
          v += noise * p.attention_noise * arng.normal();
        } else {
          v += noise * 2.0 * arng.normal();
        }
        logits[static_cast<std::size_t>(j)] = v;
      }
      softmax_row(logits, t.a_ii.data() + static_cast<std::size_t>(i) * n);
    }

    // Values: object (or background) embedding plus isotropic noise; outputs O = A V.
    Rng vrng(derive_seed(spec.rng_seed, kStreamValues * 1000003ull + static_cast<std::uint64_t>(layer)));
    MatrixF values(n, p.d_h);
    const double per_dim = noise * p.value_noise / std::sqrt(static_cast<double>(p.d_h));
    for (int j = 0; j < n; ++j) {
      const int lj = labels[static_cast<std::size_t>(j)];
      const VecD& base = lj >= 0 ? embeddings[static_cast<std::size_t>(lj)] : background;
      for (int d = 0; d < p.d_h; ++d) {
        const double v = structured ? base[d] + per_dim * vrng.normal() : vrng.normal();
        values(j, d) = static_cast<float>(v);
      }
    }
    t.o_ii = (t.a_ii * values).eval();

    // Concept attention: plateau on the target, weaker plateau and peak on
    // confusable distractors, planted peak at the anchor. Noise is bounded so
    // the planted peak is always the strict maximum.
    Rng crng(derive_seed(spec.rng_seed, kStreamConcept * 1000003ull + static_cast<std::uint64_t>(layer)));
    t.a_ci.resize(k, n);
    const double eta = noise * p.concept_noise;
    for (int c = 0; c < k; ++c) {
      std::vector<double> w(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j) {
        const int lj = labels[static_cast<std::size_t>(j)];
        double base = 1.0;
        if (lj == c) base = p.concept_plateau;
        else if (is_confusable(conf, c, lj)) base = p.distractor_ratio * p.concept_plateau;
        w[static_cast<std::size_t>(j)] = base;
      }
      w[static_cast<std::size_t>(out.anchors[static_cast<std::size_t>(c)])] = p.concept_plateau * (1.0 + p.anchor_boost);
      for (int o = 0; o < k; ++o) {
        if (is_confusable(conf, c, o)) {
          w[static_cast<std::size_t>(out.anchors[static_cast<std::size_t>(o)])] =
              p.distractor_ratio * p.concept_plateau * (1.0 + p.anchor_boost);
        }
      }
      double sum = 0.0;
      for (double& v : w) {
        v *= std::exp(eta * crng.uniform(-1.0, 1.0));
        sum += v;
      }
      for (int j = 0; j < n; ++j) t.a_ci(c, j) = static_cast<float>(w[static_cast<std::size_t>(j)] / sum);
    }
    b.tensors.push_back(std::move(t));
  }

  SceneAnnotation& a = out.annotation;
  a.image_id = spec.image_id;
  a.pixel_h = grid.h * p.pixels_per_token;
  a.pixel_w = grid.w * p.pixels_per_token;
  for (int o = 0; o < k; ++o) {
    PixelMask m(a.pixel_h, a.pixel_w);
    for (const int tok : spec.objects[static_cast<std::size_t>(o)].tokens) {
      const int r0 = grid.row_of(tok) * p.pixels_per_token, c0 = grid.col_of(tok) * p.pixels_per_token;
      for (int y = r0; y < r0 + p.pixels_per_token; ++y) {
        for (int x = c0; x < c0 + p.pixels_per_token; ++x) m.set(y, x, true);
      }
    }
    a.concepts.push_back(spec.objects[static_cast<std::size_t>(o)].concept_name);
    a.masks.push_back(std::move(m));
  }
  return out;
}

bool rows_are_object_coherent(const AttentionBundle& bundle, const SceneAnnotation& annotation) {
  const std::vector<int> labels = project_to_tokens(annotation, bundle.grid);
  const AggregatedSignals s = aggregate_layers(bundle, bundle.layers);
  const MatrixD sim = row_similarity(s.a_ii_mean);
  double same = 0.0, cross = 0.0;
  std::size_t same_n = 0, cross_n = 0;
  for (int i = 0; i < bundle.n(); ++i) {
    const int li = labels[static_cast<std::size_t>(i)];
    if (li < 0) continue;
    for (int j = 0; j < bundle.n(); ++j) {
      const int lj = labels[static_cast<std::size_t>(j)];
      if (lj < 0 || i == j) continue;
      if (li == lj) {
        same += sim(i, j);
        ++same_n;
      } else {
        cross += sim(i, j);
        ++cross_n;
      }
    }
  }
  if (same_n == 0) return false;
  if (cross_n == 0) return true;
  return same / static_cast<double>(same_n) > cross / static_cast<double>(cross_n);
}

SceneSpec standard_scene_spec(std::uint64_t master_seed, int index) {
  SceneSpec spec;
  spec.grid = {32, 32};
  spec.rng_seed = derive_seed(master_seed, static_cast<std::uint64_t>(index));
  char id[32];
  std::snprintf(id, sizeof id, "scene_%03d", index);
  spec.image_id = id;
  Rng rng(derive_seed(spec.rng_seed, 7));
  const int count = rng.bernoulli(0.5) ? 3 : 2;

  for (;;) {
    spec.objects.clear();
    std::vector<int> owner(static_cast<std::size_t>(spec.grid.n()), -1);
    bool ok = true;
    for (int o = 0; o < count && ok; ++o) {
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        std::vector<int> region;
        if (rng.bernoulli(0.5)) {
          const int hh = rng.integer(8, 13), ww = rng.integer(8, 13);
          region = rect_region(spec.grid, rng.integer(0, spec.grid.h - hh), rng.integer(0, spec.grid.w - ww), hh, ww);
        } else {
          const double rr = rng.uniform(4.0, 6.5), rc = rng.uniform(4.0, 6.5);
          const double cr = rng.uniform(rr, spec.grid.h - 1 - rr), cc = rng.uniform(rc, spec.grid.w - 1 - rc);
          region = ellipse_region(spec.grid, cr, cc, rr, rc);
        }
        // Keep a one-token margin to every placed object.
        bool clear = true;
        for (const int t : region) {
          const int r = spec.grid.row_of(t), c = spec.grid.col_of(t);
          for (int dr = -1; dr <= 1 && clear; ++dr) {
            for (int dc = -1; dc <= 1 && clear; ++dc) {
              const int rr = r + dr, cc = c + dc;
              if (rr >= 0 && rr < spec.grid.h && cc >= 0 && cc < spec.grid.w &&
                  owner[static_cast<std::size_t>(rr * spec.grid.w + cc)] >= 0) {
                clear = false;
              }
            }
          }
          if (!clear) break;
        }
        if (!clear) continue;
        for (const int t : region) owner[static_cast<std::size_t>(t)] = o;
        spec.objects.push_back({"", std::move(region), 0, -1});
        placed = true;
      }
      ok = placed;
    }
    if (ok) break;
  }

  std::vector<std::size_t> names(kConceptNames.size());
  for (std::size_t i = 0; i < names.size(); ++i) names[i] = i;
  for (std::size_t i = names.size() - 1; i > 0; --i) {
    std::swap(names[i], names[static_cast<std::size_t>(rng.integer(0, static_cast<int>(i)))]);
  }
  for (std::size_t o = 0; o < spec.objects.size(); ++o) {
    spec.objects[o].concept_name = kConceptNames[names[o]];
    spec.objects[o].feature_seed = derive_seed(spec.rng_seed, 100 + o);
  }
  spec.confusable_pairs.push_back({0, 1});
  if (count == 3 && rng.bernoulli(0.5)) spec.confusable_pairs.push_back({1, 2});
  return spec;
}

SuiteReport standard_suite(int count, std::uint64_t master_seed, int threads) {
  if (count < 1) throw ValidationError("suite count must be at least 1");
  SuiteReport report;
  report.scenes.resize(static_cast<std::size_t>(count));
  report.anchors.resize(static_cast<std::size_t>(count));
  std::vector<int> redraws(static_cast<std::size_t>(count), 0);
  parallel_for(static_cast<std::size_t>(count), threads, [&](std::size_t i) {
    SceneSpec spec = standard_scene_spec(master_seed, static_cast<int>(i));
    for (int attempt = 0;; ++attempt) {
      SyntheticScene s = generate(spec);
      if (rows_are_object_coherent(s.bundle, s.annotation) || attempt >= 8) {
        report.scenes[i] = {spec.image_id, std::move(s.bundle), std::move(s.annotation)};
        report.anchors[i] = std::move(s.anchors);
        redraws[i] = attempt;
        break;
      }
      spec.rng_seed = derive_seed(spec.rng_seed, 0xC0FFEE);
    }
  });
  for (const int r : redraws) report.regenerated += r;
  return report;
}

}  // namespace anchorprop
