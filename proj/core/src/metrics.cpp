#include "anchorprop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <utility>

#include <json.hpp>

#include "anchorprop/error.hpp"
#include "anchorprop/parallel.hpp"
#include "anchorprop/pgm.hpp"

namespace anchorprop {
namespace {

using nlohmann::json;

void require_same_shape(int h1, int w1, int h2, int w2, const char* what) {
  if (h1 != h2 || w1 != w2) {
    throw ValidationError(std::string(what) + ": shape mismatch " + std::to_string(h1) + "x" +
                          std::to_string(w1) + " vs " + std::to_string(h2) + "x" + std::to_string(w2));
  }
}

/// Sample position on the token axis for pixel p, clamped to [0, tokens - 1].
struct Tap {
  int lo;
  int hi;
  double t;
};

Tap bilinear_tap(int p, int pixels, int tokens) {
  double v = (p + 0.5) * tokens / pixels - 0.5;
  v = std::clamp(v, 0.0, static_cast<double>(tokens - 1));
  const int lo = static_cast<int>(std::floor(v));
  const int hi = std::min(lo + 1, tokens - 1);
  return {lo, hi, v - lo};
}

std::string mask_file_name(const std::string& image_id, std::size_t concept_pos) {
  return "masks/" + image_id + "__c" + std::to_string(concept_pos) + ".pgm";
}

}  // namespace

const PixelMask* SceneAnnotation::find(const std::string& concept_name) const {
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    if (concepts[i] == concept_name) return &masks[i];
  }
  return nullptr;
}

void validate_annotation(const SceneAnnotation& a) {
  if (a.pixel_h < 1 || a.pixel_w < 1) throw ValidationError("annotation " + a.image_id + ": empty image");
  if (a.concepts.size() != a.masks.size()) {
    throw ValidationError("annotation " + a.image_id + ": concept/mask count mismatch");
  }
  for (std::size_t i = 0; i < a.masks.size(); ++i) {
    if (a.masks[i].h != a.pixel_h || a.masks[i].w != a.pixel_w) {
      throw ValidationError("annotation " + a.image_id + ": mask for '" + a.concepts[i] +
                            "' does not match image size");
    }
  }
}

std::vector<SceneAnnotation> load_annotations(const std::filesystem::path& dir) {
  const auto index = dir / "annotations.json";
  std::ifstream in(index);
  if (!in) throw IoError("cannot open: " + index.string());
  std::vector<SceneAnnotation> out;
  try {
    const json doc = json::parse(in);
    for (const json& item : doc) {
      SceneAnnotation a;
      a.image_id = item.at("image_id").get<std::string>();
      a.pixel_h = item.at("pixel_h").get<int>();
      a.pixel_w = item.at("pixel_w").get<int>();
      // Keys of a JSON object are unordered; keep the optional "concepts" order when present.
      std::vector<std::string> order;
      if (item.contains("concepts")) {
        order = item.at("concepts").get<std::vector<std::string>>();
      } else {
        for (const auto& [key, _] : item.at("masks").items()) order.push_back(key);
      }
      for (const std::string& c : order) {
        const GrayImage img = read_pgm(dir / item.at("masks").at(c).get<std::string>());
        a.concepts.push_back(c);
        a.masks.push_back(gray_to_mask(img));
      }
      validate_annotation(a);
      out.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw ValidationError("annotations.json: " + std::string(e.what()));
  }
  return out;
}

void save_annotations(const std::filesystem::path& dir, std::span<const SceneAnnotation> annotations) {
  std::filesystem::create_directories(dir / "masks");
  json doc = json::array();
  for (const SceneAnnotation& a : annotations) {
    validate_annotation(a);
    json masks = json::object();
    for (std::size_t i = 0; i < a.concepts.size(); ++i) {
      const std::string file = mask_file_name(a.image_id, i);
      write_pgm(dir / file, mask_to_gray(a.masks[i]));
      masks[a.concepts[i]] = file;
    }
    doc.push_back({{"image_id", a.image_id},
                   {"pixel_h", a.pixel_h},
                   {"pixel_w", a.pixel_w},
                   {"concepts", a.concepts},
                   {"masks", masks}});
  }
  const auto index = dir / "annotations.json";
  std::ofstream out(index);
  if (!out) throw IoError("cannot open for writing: " + index.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + index.string());
}

PixelMap upsample_heatmap(const HeatMap& heat, int pixel_h, int pixel_w) {
  const GridShape& g = heat.grid;
  if (pixel_h < g.h || pixel_w < g.w) throw ValidationError("upsample target smaller than token grid");
  PixelMap out(pixel_h, pixel_w);
  std::vector<Tap> xs(static_cast<std::size_t>(pixel_w));
  for (int x = 0; x < pixel_w; ++x) xs[static_cast<std::size_t>(x)] = bilinear_tap(x, pixel_w, g.w);
  for (int y = 0; y < pixel_h; ++y) {
    const Tap ty = bilinear_tap(y, pixel_h, g.h);
    const double* r0 = heat.values.data() + static_cast<std::size_t>(ty.lo) * g.w;
    const double* r1 = heat.values.data() + static_cast<std::size_t>(ty.hi) * g.w;
    double* dst = out.values.data() + static_cast<std::size_t>(y) * pixel_w;
    for (int x = 0; x < pixel_w; ++x) {
      const Tap& tx = xs[static_cast<std::size_t>(x)];
      const double top = r0[tx.lo] + (r0[tx.hi] - r0[tx.lo]) * tx.t;
      const double bottom = r1[tx.lo] + (r1[tx.hi] - r1[tx.lo]) * tx.t;
      dst[x] = std::clamp(top + (bottom - top) * ty.t, 0.0, 1.0);
    }
  }
  return out;
}

PixelMask upsample_mask(const BinaryMask& mask, int pixel_h, int pixel_w) {
  const GridShape& g = mask.grid;
  if (pixel_h < g.h || pixel_w < g.w) throw ValidationError("upsample target smaller than token grid");
  PixelMask out(pixel_h, pixel_w);
  for (int y = 0; y < pixel_h; ++y) {
    const int row = std::min(g.h - 1, static_cast<int>(std::floor((y + 0.5) * g.h / pixel_h)));
    for (int x = 0; x < pixel_w; ++x) {
      const int col = std::min(g.w - 1, static_cast<int>(std::floor((x + 0.5) * g.w / pixel_w)));
      out.set(y, x, mask.bits[static_cast<std::size_t>(row) * g.w + col] != 0);
    }
  }
  return out;
}

BinaryScores binary_metrics(const PixelMask& pred, const PixelMask& gt, const PixelMask* region) {
  require_same_shape(pred.h, pred.w, gt.h, gt.w, "binary_metrics");
  if (region != nullptr) require_same_shape(pred.h, pred.w, region->h, region->w, "binary_metrics region");
  std::size_t evaluated = 0, correct = 0, inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    if (region != nullptr && region->bits[i] == 0) continue;
    const bool p = pred.bits[i] != 0;
    const bool g = gt.bits[i] != 0;
    ++evaluated;
    correct += (p == g) ? 1 : 0;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  BinaryScores s;
  s.evaluated = evaluated;
  s.acc = evaluated == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(evaluated);
  if (uni == 0) {
    s.iou = 1.0;
    s.both_empty = true;
  } else {
    s.iou = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return s;
}

ApResult average_precision(const PixelMap& scores, const PixelMask& gt, const PixelMask* region) {
  require_same_shape(scores.h, scores.w, gt.h, gt.w, "average_precision");
  if (region != nullptr) require_same_shape(scores.h, scores.w, region->h, region->w, "average_precision region");
  std::vector<std::pair<double, bool>> items;
  items.reserve(scores.values.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < scores.values.size(); ++i) {
    if (region != nullptr && region->bits[i] == 0) continue;
    const bool label = gt.bits[i] != 0;
    positives += label ? 1 : 0;
    items.emplace_back(scores.values[i], label);
  }
  ApResult r;
  if (positives == 0) {
    r.gt_empty = true;
    return r;
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  double ap = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    const double t = items[i].first;
    for (; i < items.size() && items[i].first == t; ++i) {
      (items[i].second ? tp : fp) += 1;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  r.ap = ap;
  return r;
}

NarResult non_target_activation_ratio(const PixelMap& heat, const PixelMask& m_c, const PixelMask& m_other) {
  require_same_shape(heat.h, heat.w, m_c.h, m_c.w, "nar");
  require_same_shape(heat.h, heat.w, m_other.h, m_other.w, "nar");
  double other = 0.0, total = 0.0;
  for (std::size_t i = 0; i < heat.values.size(); ++i) {
    const bool in_c = m_c.bits[i] != 0;
    const bool in_other = !in_c && m_other.bits[i] != 0;
    if (in_c || in_other) total += heat.values[i];
    if (in_other) other += heat.values[i];
  }
  NarResult r;
  if (total <= 0.0) {
    r.zero_denominator = true;
    return r;
  }
  r.nar = other / total;
  return r;
}

PairMetrics evaluate_pair(const PairInput& input, const SceneAnnotation& a) {
  const PixelMask* target = a.find(input.concept_name);
  if (target == nullptr) {
    throw ValidationError("annotation " + a.image_id + " has no mask for concept '" + input.concept_name + "'");
  }
  PixelMask other(a.pixel_h, a.pixel_w);
  for (std::size_t c = 0; c < a.concepts.size(); ++c) {
    if (a.concepts[c] == input.concept_name) continue;
    for (std::size_t i = 0; i < other.bits.size(); ++i) {
      if (a.masks[c].bits[i] != 0 && target->bits[i] == 0) other.bits[i] = 1;
    }
  }
  PixelMask fg = *target;
  for (std::size_t i = 0; i < fg.bits.size(); ++i) fg.bits[i] |= other.bits[i];

  const PixelMap heat = upsample_heatmap(input.heat, a.pixel_h, a.pixel_w);
  const PixelMask pred = upsample_mask(input.mask, a.pixel_h, a.pixel_w);

  PairMetrics m;
  m.image_id = input.image_id;
  m.concept_name = input.concept_name;
  m.anchor_token = input.anchor.token_index;
  m.degenerate_heat = input.heat.degenerate;

  const BinaryScores whole = binary_metrics(pred, *target);
  m.acc = whole.acc;
  m.iou = whole.iou;
  m.iou_both_empty = whole.both_empty;
  const BinaryScores fg_scores = binary_metrics(pred, *target, &fg);
  m.acc_fg = fg_scores.acc;
  m.iou_fg = fg_scores.iou;
  m.iou_fg_both_empty = fg_scores.both_empty;

  const ApResult ap = average_precision(heat, *target);
  m.ap = ap.ap;
  m.ap_undefined = ap.gt_empty;
  const ApResult ap_fg = average_precision(heat, *target, &fg);
  m.ap_fg = ap_fg.ap;
  m.ap_fg_undefined = ap_fg.gt_empty;

  const NarResult nar = non_target_activation_ratio(heat, *target, other);
  m.nar = nar.nar;
  m.nar_undefined = nar.zero_denominator;

  const std::size_t target_count = target->count();
  std::size_t covered = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) covered += (pred.bits[i] != 0 && target->bits[i] != 0) ? 1 : 0;
  m.coverage = target_count == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(target_count);
  m.anchor_hit = anchor_hit(input.anchor, *target, input.heat.grid);
  return m;
}

MetricsReport summarize(std::vector<PairMetrics> pairs) {
  MetricsReport r;
  r.pair_count = pairs.size();
  for (const PairMetrics& p : pairs) {
    r.acc += p.acc;
    r.miou += p.iou;
    r.map += p.ap;
    r.acc_fg += p.acc_fg;
    r.miou_fg += p.iou_fg;
    r.map_fg += p.ap_fg;
    r.nar += p.nar;
    r.coverage += p.coverage;
    r.anchor_hit_rate += p.anchor_hit ? 1.0 : 0.0;
    r.flagged_ap += (p.ap_undefined || p.ap_fg_undefined) ? 1 : 0;
    r.flagged_nar += p.nar_undefined ? 1 : 0;
    r.flagged_empty_iou += (p.iou_both_empty || p.iou_fg_both_empty) ? 1 : 0;
    r.degenerate_heatmaps += p.degenerate_heat ? 1 : 0;
  }
  if (!pairs.empty()) {
    const auto n = static_cast<double>(pairs.size());
    for (double* v : {&r.acc, &r.miou, &r.map, &r.acc_fg, &r.miou_fg, &r.map_fg, &r.nar, &r.coverage, &r.anchor_hit_rate}) {
      *v /= n;
    }
  }
  r.pairs = std::move(pairs);
  return r;
}

MetricsReport evaluate_dataset(std::span<const PairInput> results, std::span<const SceneAnnotation> annotations,
                               int threads) {
  std::map<std::string, const SceneAnnotation*> by_id;
  for (const SceneAnnotation& a : annotations) by_id[a.image_id] = &a;
  std::vector<std::string> missing;
  for (const PairInput& r : results) {
    const auto it = by_id.find(r.image_id);
    if (it == by_id.end()) {
      missing.push_back(r.image_id);
    } else if (it->second->find(r.concept_name) == nullptr) {
      missing.push_back(r.image_id + ":" + r.concept_name);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ValidationError("missing annotation for: " + list);
  }
  std::vector<PairMetrics> pairs(results.size());
  parallel_for(results.size(), threads, [&](std::size_t i) {
    pairs[i] = evaluate_pair(results[i], *by_id.at(results[i].image_id));
  });
  return summarize(std::move(pairs));
}

}  // namespace anchorprop
