#include "anchorprop/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "anchorprop/error.hpp"
#include "anchorprop/parallel.hpp"

namespace anchorprop {
namespace {

enum class PairCategory { kSame, kConfusable, kFgBg, kNone };

PairCategory categorize(int a, int b) {
  if (a >= 0 && b >= 0) return a == b ? PairCategory::kSame : PairCategory::kConfusable;
  if (a >= 0 || b >= 0) return PairCategory::kFgBg;
  return PairCategory::kNone;
}

template <typename ValueAt>
AffinityStats accumulate_stats(int n, std::span<const int> labels, AffinityKind kind, ValueAt&& value_at) {
  if (static_cast<int>(labels.size()) != n) throw ValidationError("token label count does not match affinity size");
  double same = 0.0, conf = 0.0, fgbg = 0.0;
  AffinityStats s;
  s.kind = kind;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      switch (categorize(labels[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(j)])) {
        case PairCategory::kSame:
          same += value_at(i, j);
          ++s.same_pairs;
          break;
        case PairCategory::kConfusable:
          conf += value_at(i, j);
          ++s.confusable_pairs;
          break;
        case PairCategory::kFgBg:
          fgbg += value_at(i, j);
          ++s.fg_bg_pairs;
          break;
        case PairCategory::kNone:
          break;
      }
    }
  }
  auto pct = [](double sum, std::size_t count) { return count == 0 ? 0.0 : 100.0 * sum / static_cast<double>(count); };
  s.same_object = pct(same, s.same_pairs);
  s.confusable_diff = pct(conf, s.confusable_pairs);
  s.fg_bg = pct(fgbg, s.fg_bg_pairs);
  return s;
}

}  // namespace

double patch_distance(int a, int b, const GridShape& grid, DistanceMetric metric) {
  const int dr = std::abs(grid.row_of(a) - grid.row_of(b));
  const int dc = std::abs(grid.col_of(a) - grid.col_of(b));
  if (metric == DistanceMetric::kChebyshev) return std::max(dr, dc);
  return std::sqrt(static_cast<double>(dr * dr + dc * dc));
}

std::vector<DistanceBin> default_locality_bins(const GridShape& grid, DistanceMetric metric) {
  const double max_d = metric == DistanceMetric::kChebyshev
                           ? static_cast<double>(std::max(grid.h, grid.w) - 1)
                           : std::hypot(grid.h - 1, grid.w - 1);
  std::vector<DistanceBin> bins;
  if (metric == DistanceMetric::kChebyshev) {
    const std::vector<DistanceBin> edges = {{0, 0}, {1, 1}, {2, 2}, {3, 4}, {5, 8}, {9, 16}, {17, max_d}};
    for (const DistanceBin& b : edges) {
      if (b.min_dist > max_d) break;
      bins.push_back({b.min_dist, std::min(b.max_dist, max_d)});
    }
    bins.back().max_dist = max_d;
  } else {
    const std::vector<DistanceBin> edges = {{0, 0}, {0, 1}, {1, 2}, {2, 4}, {4, 8}, {8, 16}, {16, max_d}};
    for (const DistanceBin& b : edges) {
      if (b.min_dist >= max_d && !bins.empty()) break;
      bins.push_back({b.min_dist, std::min(b.max_dist, max_d)});
    }
    bins.back().max_dist = max_d;
  }
  return bins;
}

LocalityProfile locality_profile(const MatrixF& a_ii_mean, const GridShape& grid, std::span<const DistanceBin> bins,
                                 DistanceMetric metric) {
  const int n = grid.n();
  if (a_ii_mean.rows() != n || a_ii_mean.cols() != n) throw ValidationError("locality: attention shape does not match grid");
  if (bins.empty()) throw ValidationError("locality: no bins");
  const double max_d = metric == DistanceMetric::kChebyshev ? static_cast<double>(std::max(grid.h, grid.w) - 1)
                                                            : std::hypot(grid.h - 1, grid.w - 1);
  const double step = metric == DistanceMetric::kChebyshev ? 1.0 : 0.0;
  if (bins.front().min_dist != 0.0) throw ValidationError("locality: first bin must start at 0");
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (bins[b].max_dist < bins[b].min_dist) throw ValidationError("locality: bin with max < min");
    if (b > 0 && (bins[b].min_dist < bins[b - 1].min_dist || bins[b].min_dist > bins[b - 1].max_dist + step)) {
      throw ValidationError("locality: bins must be ordered and contiguous");
    }
  }
  if (bins.back().max_dist < max_d - 1e-12) throw ValidationError("locality: bins do not reach the largest grid distance");

  LocalityProfile p;
  p.bins.assign(bins.begin(), bins.end());
  p.metric = metric;
  std::vector<double> sums(bins.size(), 0.0);
  p.pair_count.assign(bins.size(), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double d = patch_distance(i, j, grid, metric);
      for (std::size_t b = 0; b < bins.size(); ++b) {
        if (d >= bins[b].min_dist && d <= bins[b].max_dist + 1e-12) {
          sums[b] += a_ii_mean(i, j);
          ++p.pair_count[b];
          break;
        }
      }
    }
  }
  p.mean_weight.resize(bins.size());
  for (std::size_t b = 0; b < bins.size(); ++b) {
    p.mean_weight[b] = p.pair_count[b] == 0 ? 0.0 : sums[b] / static_cast<double>(p.pair_count[b]);
  }
  return p;
}

void write_locality_csv(const LocalityProfile& profile, std::ostream& out) {
  out << "bin_min,bin_max,mean_weight\n" << std::setprecision(10);
  for (std::size_t b = 0; b < profile.bins.size(); ++b) {
    out << profile.bins[b].min_dist << ',' << profile.bins[b].max_dist << ',' << profile.mean_weight[b] << '\n';
  }
}

std::vector<int> project_to_tokens(const SceneAnnotation& a, const GridShape& grid) {
  std::vector<int> labels(static_cast<std::size_t>(grid.n()), -1);
  std::vector<double> best(static_cast<std::size_t>(grid.n()), 0.5);
  for (std::size_t c = 0; c < a.masks.size(); ++c) {
    const PixelMask& m = a.masks[c];
    std::vector<std::size_t> inside(static_cast<std::size_t>(grid.n()), 0);
    std::vector<std::size_t> total(static_cast<std::size_t>(grid.n()), 0);
    for (int y = 0; y < m.h; ++y) {
      const int row = std::min(grid.h - 1, static_cast<int>(static_cast<long long>(y) * grid.h / m.h));
      for (int x = 0; x < m.w; ++x) {
        const int col = std::min(grid.w - 1, static_cast<int>(static_cast<long long>(x) * grid.w / m.w));
        const auto t = static_cast<std::size_t>(row * grid.w + col);
        ++total[t];
        inside[t] += m.at(y, x) ? 1 : 0;
      }
    }
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (total[t] == 0) continue;
      const double share = static_cast<double>(inside[t]) / static_cast<double>(total[t]);
      if (share > best[t]) {
        best[t] = share;
        labels[t] = static_cast<int>(c);
      }
    }
  }
  return labels;
}

std::string_view to_string(AffinityKind kind) {
  switch (kind) {
    case AffinityKind::kAttention:
      return "w_attn";
    case AffinityKind::kOutputCosine:
      return "w_cos";
    case AffinityKind::kGated:
      return "gated";
  }
  return "w_attn";
}

AffinityStats affinity_stats(const MatrixD& affinity, std::span<const int> labels, AffinityKind kind) {
  return accumulate_stats(static_cast<int>(affinity.rows()), labels, kind,
                          [&](int i, int j) { return affinity(i, j); });
}

AffinityStats affinity_stats(const CsrMatrix& affinity, std::span<const int> labels, AffinityKind kind) {
  // Densify one row at a time.
  std::vector<double> row(static_cast<std::size_t>(affinity.n), 0.0);
  int loaded = -1;
  return accumulate_stats(affinity.n, labels, kind, [&](int i, int j) {
    if (i != loaded) {
      std::fill(row.begin(), row.end(), 0.0);
      for (std::int64_t e = affinity.row_ptr[static_cast<std::size_t>(i)]; e < affinity.row_ptr[static_cast<std::size_t>(i) + 1]; ++e) {
        row[static_cast<std::size_t>(affinity.cols[static_cast<std::size_t>(e)])] =
            affinity.values.empty() ? 1.0 : affinity.values[static_cast<std::size_t>(e)];
      }
      loaded = i;
    }
    return row[static_cast<std::size_t>(j)];
  });
}

AffinityReport affinity_report(const AttentionBundle& bundle, const SceneAnnotation& annotation,
                               const PipelineConfig& config) {
  const AggregatedSignals signals = aggregate_layers(bundle, config.graph_layers);
  const std::vector<int> labels = project_to_tokens(annotation, bundle.grid);
  AffinityReport r;

  const MatrixD w_attn = row_similarity(signals.a_ii_mean, config.threads);
  r.attention = affinity_stats(w_attn, labels, AffinityKind::kAttention);

  MatrixD unit = signals.o_ii_mean.cast<double>();
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double norm = unit.row(i).norm();
    if (norm > 0.0) unit.row(i) /= norm;
  }
  const MatrixD w_cos = unit * unit.transpose();
  r.output = affinity_stats(w_cos, labels, AffinityKind::kOutputCosine);

  const GateMask gate = build_gate(w_attn, GateParams{config.gate_quantile, true}, config.threads);
  const CsrMatrix gated = gated_output_affinity(signals.o_ii_mean, gate, config.threads);
  r.gated = affinity_stats(gated, labels, AffinityKind::kGated);
  r.tau_w = gate.tau;
  r.gate_density = gate.density;
  return r;
}

std::string layer_set_label(std::span<const int> layers) {
  std::string s;
  for (const int l : layers) s += (s.empty() ? "L" : "+L") + std::to_string(l);
  return s;
}

std::vector<SweepRow> sweep_steps(std::span<const Scene> scenes, std::span<const int> steps,
                                  const PipelineConfig& config, GroundingVariant variant) {
  for (const int s : steps) {
    if (s < 0) throw ValidationError("step counts must be non-negative");
  }
  // per_scene[scene][step] -> metrics of every concept in that scene
  std::vector<std::vector<std::vector<PairMetrics>>> per_scene(scenes.size());
  PipelineConfig inner = config;
  inner.threads = 1;
  parallel_for(scenes.size(), config.threads, [&](std::size_t si) {
    const Scene& scene = scenes[si];
    const GroundingSession session(scene.bundle, inner, variant);
    auto& out = per_scene[si];
    out.resize(steps.size());
    for (const std::string& concept_name : scene.annotation.concepts) {
      const int k = scene.bundle.concept_index(concept_name);
      if (k < 0) {
        throw ValidationError("scene " + scene.image_id + ": concept '" + concept_name + "' not in bundle");
      }
      const std::vector<GroundingResult> results = session.ground_steps(k, steps);
      for (std::size_t s = 0; s < steps.size(); ++s) {
        const PairInput input{scene.image_id, concept_name, results[s].heat, results[s].mask, results[s].anchor};
        out[s].push_back(evaluate_pair(input, scene.annotation));
      }
    }
  });

  std::vector<SweepRow> rows;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    std::vector<PairMetrics> pairs;
    for (auto& scene_rows : per_scene) {
      for (auto& p : scene_rows[s]) pairs.push_back(std::move(p));
    }
    rows.push_back({"steps=" + std::to_string(steps[s]), summarize(std::move(pairs))});
  }
  return rows;
}

std::vector<SweepRow> sweep_layers(std::span<const Scene> scenes, std::span<const std::vector<int>> layer_sets,
                                   const PipelineConfig& config) {
  std::vector<SweepRow> rows;
  for (const std::vector<int>& set : layer_sets) {
    if (set.empty()) throw ValidationError("empty layer set in sweep");
    for (const Scene& scene : scenes) {
      for (const int l : set) {
        if (scene.bundle.layer_position(l) < 0) {
          throw ValidationError("unknown layer " + std::to_string(l) + " in scene " + scene.image_id);
        }
      }
    }
    PipelineConfig c = config;
    c.graph_layers = set;
    const int steps[] = {config.n_steps};
    std::vector<SweepRow> one = sweep_steps(scenes, steps, c);
    rows.push_back({layer_set_label(set), std::move(one.front().report)});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.report.miou_fg > b.report.miou_fg; });
  return rows;
}

MetricsReport evaluate_scenes(std::span<const Scene> scenes, const PipelineConfig& config, GroundingVariant variant) {
  const int steps[] = {config.n_steps};
  return std::move(sweep_steps(scenes, steps, config, variant).front().report);
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << "config,miou_fg,map_fg,nar,acc_fg\n" << std::setprecision(10);
  for (const SweepRow& r : rows) {
    out << r.config << ',' << r.report.miou_fg << ',' << r.report.map_fg << ',' << r.report.nar << ','
        << r.report.acc_fg << '\n';
  }
}

}  // namespace anchorprop
