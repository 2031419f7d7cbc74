#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace oracle {

MatrixD row_cosine(const MatrixF& m) {
  const auto n = static_cast<int>(m.rows());
  const auto d = static_cast<int>(m.cols());
  MatrixD out = MatrixD::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (int c = 0; c < d; ++c) {
        const double a = m(i, c), b = m(j, c);
        dot += a * b;
        ni += a * a;
        nj += b * b;
      }
      out(i, j) = (ni > 0.0 && nj > 0.0) ? dot / (std::sqrt(ni) * std::sqrt(nj)) : 0.0;
    }
  }
  return out;
}

double sorted_percentile(std::vector<double> values, double quantile) {
  std::sort(values.begin(), values.end());
  const auto m = static_cast<long double>(values.size());
  // Smallest 1-based rank r with r >= q * M, ignoring representation noise in q * M.
  std::size_t r = 1;
  while (static_cast<long double>(r) < static_cast<long double>(quantile) * m - 1e-9L) ++r;
  return values[std::min(r, values.size()) - 1];
}

DenseGraph dense_graph(const MatrixF& a_ii, const MatrixF& o_ii, double quantile) {
  const auto n = static_cast<int>(a_ii.rows());
  DenseGraph g;
  g.w_attn = row_cosine(a_ii);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) g.w_attn(i, j) = std::clamp(g.w_attn(i, j), 0.0, 1.0);
  }
  std::vector<double> all(g.w_attn.data(), g.w_attn.data() + g.w_attn.size());
  g.tau = sorted_percentile(all, quantile);
  const MatrixD ocos = row_cosine(o_ii);
  g.gate.assign(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n), false));
  g.raw = MatrixD::Zero(n, n);
  g.norm = MatrixD::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      const bool keep = g.w_attn(i, j) > g.tau;
      g.gate[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = keep;
      g.raw(i, j) = keep ? std::max(0.0, ocos(i, j)) : 0.0;
      sum += g.raw(i, j);
    }
    if (sum > 0.0) g.norm.row(i) = g.raw.row(i) / sum;
  }
  return g;
}

std::vector<double> dense_propagate(const MatrixD& w_norm, int seed, int steps) {
  const auto n = w_norm.rows();
  MatrixD power = MatrixD::Identity(n, n);
  const MatrixD wt = w_norm.transpose();
  for (int s = 0; s < steps; ++s) power = (wt * power).eval();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = power(i, seed);
  return out;
}

Counts count_binary(const PixelMask& pred, const PixelMask& gt, const PixelMask* region) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (int y = 0; y < gt.h; ++y) {
    for (int x = 0; x < gt.w; ++x) {
      if (region && !region->at(y, x)) continue;
      const bool p = pred.at(y, x), g = gt.at(y, x);
      if (p && g) ++tp;
      else if (p) ++fp;
      else if (g) ++fn;
      else ++tn;
    }
  }
  Counts c;
  const std::size_t total = tp + fp + fn + tn;
  c.acc = total ? static_cast<double>(tp + tn) / static_cast<double>(total) : 0.0;
  if (tp + fp + fn == 0) {
    c.iou = 1.0;
    c.both_empty = true;
  } else {
    c.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
  }
  return c;
}

double threshold_ap(const PixelMap& scores, const PixelMask& gt, const PixelMask* region) {
  std::set<double> distinct;
  std::size_t positives = 0;
  for (int y = 0; y < gt.h; ++y) {
    for (int x = 0; x < gt.w; ++x) {
      if (region && !region->at(y, x)) continue;
      distinct.insert(scores.at(y, x));
      positives += gt.at(y, x) ? 1 : 0;
    }
  }
  if (positives == 0) return 0.0;
  double ap = 0.0, prev_recall = 0.0;
  for (auto it = distinct.rbegin(); it != distinct.rend(); ++it) {
    std::size_t tp = 0, predicted = 0;
    for (int y = 0; y < gt.h; ++y) {
      for (int x = 0; x < gt.w; ++x) {
        if (region && !region->at(y, x)) continue;
        if (scores.at(y, x) >= *it) {
          ++predicted;
          tp += gt.at(y, x) ? 1 : 0;
        }
      }
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

MatrixF random_stochastic(anchorprop::Rng& rng, int rows, int cols, double sharpness) {
  MatrixF m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double sum = 0.0;
    std::vector<double> v(static_cast<std::size_t>(cols));
    for (double& x : v) {
      x = std::pow(rng.uniform(), sharpness);
      sum += x;
    }
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<float>(v[static_cast<std::size_t>(j)] / sum);
  }
  return m;
}

MatrixF random_gaussian(anchorprop::Rng& rng, int rows, int cols) {
  MatrixF m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = static_cast<float>(rng.normal());
  }
  return m;
}

anchorprop::AttentionBundle random_bundle(std::uint64_t seed, GridShape grid, int k, std::vector<int> layers, int d_h) {
  anchorprop::Rng rng(seed);
  anchorprop::AttentionBundle b;
  b.grid = grid;
  b.d_h = d_h;
  b.layers = std::move(layers);
  for (int c = 0; c < k; ++c) b.concepts.push_back("c" + std::to_string(c));
  b.meta = {"random", 3, anchorprop::Trajectory::kGeneration, "random bundle"};
  for (std::size_t l = 0; l < b.layers.size(); ++l) {
    anchorprop::LayerTensors t;
    t.a_ci = random_stochastic(rng, k, grid.n(), 3.0);
    t.a_ii = random_stochastic(rng, grid.n(), grid.n(), 4.0);
    t.o_ii = random_gaussian(rng, grid.n(), d_h);
    b.tensors.push_back(std::move(t));
  }
  return b;
}

}  // namespace oracle
