#include "anchorprop/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "anchorprop/error.hpp"
#include "anchorprop/parallel.hpp"

namespace anchorprop {
namespace {

constexpr std::size_t kSimilarityBlock = 256;
constexpr std::size_t kRowBlock = 64;

/// Rows scaled to unit L2 norm in double; zero rows stay zero.
MatrixD unit_rows(const MatrixF& m) {
  MatrixD out = m.cast<double>();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double norm = out.row(r).norm();
    if (norm > 0.0) out.row(r) /= norm;
  }
  return out;
}

CsrMatrix assemble(int n, std::vector<std::vector<int>>& row_cols,
                   std::vector<std::vector<double>>* row_values) {
  CsrMatrix out;
  out.n = n;
  out.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) {
    out.row_ptr[static_cast<std::size_t>(i) + 1] =
        out.row_ptr[static_cast<std::size_t>(i)] + static_cast<std::int64_t>(row_cols[static_cast<std::size_t>(i)].size());
  }
  out.cols.reserve(static_cast<std::size_t>(out.row_ptr.back()));
  if (row_values != nullptr) out.values.reserve(out.cols.capacity());
  for (int i = 0; i < n; ++i) {
    auto& c = row_cols[static_cast<std::size_t>(i)];
    out.cols.insert(out.cols.end(), c.begin(), c.end());
    std::vector<int>().swap(c);
    if (row_values != nullptr) {
      auto& v = (*row_values)[static_cast<std::size_t>(i)];
      out.values.insert(out.values.end(), v.begin(), v.end());
      std::vector<double>().swap(v);
    }
  }
  return out;
}

}  // namespace

bool CsrMatrix::contains(int i, int j) const {
  const auto begin = cols.begin() + row_ptr[static_cast<std::size_t>(i)];
  const auto end = cols.begin() + row_ptr[static_cast<std::size_t>(i) + 1];
  return std::binary_search(begin, end, j);
}

double CsrMatrix::value(int i, int j) const {
  const auto begin = cols.begin() + row_ptr[static_cast<std::size_t>(i)];
  const auto end = cols.begin() + row_ptr[static_cast<std::size_t>(i) + 1];
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j || values.empty()) return 0.0;
  return values[static_cast<std::size_t>(it - cols.begin())];
}

std::size_t HybridGraph::zero_row_count() const {
  return static_cast<std::size_t>(
      std::count(row_sums_pre_norm.begin(), row_sums_pre_norm.end(), 0.0));
}

double HybridGraph::weight(int i, int j) const {
  const auto begin = cols.begin() + row_ptr[static_cast<std::size_t>(i)];
  const auto end = cols.begin() + row_ptr[static_cast<std::size_t>(i) + 1];
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return 0.0;
  return weights[static_cast<std::size_t>(it - cols.begin())];
}

MatrixD row_similarity(const MatrixF& a_ii_mean, int threads) {
  const Eigen::Index n = a_ii_mean.rows();
  const MatrixD unit = unit_rows(a_ii_mean);
  std::vector<bool> nonzero(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) nonzero[static_cast<std::size_t>(i)] = unit.row(i).squaredNorm() > 0.0;

  MatrixD sim(n, n);
  const auto blocks = make_blocks(static_cast<std::size_t>(n), kSimilarityBlock);
  struct Task {
    std::size_t bi, bj;
  };
  std::vector<Task> tasks;
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    for (std::size_t bj = 0; bj <= bi; ++bj) tasks.push_back({bi, bj});
  }
  parallel_for(tasks.size(), threads, [&](std::size_t t) {
    const BlockRange& ri = blocks[tasks[t].bi];
    const BlockRange& rj = blocks[tasks[t].bj];
    const auto rows_i = static_cast<Eigen::Index>(ri.end - ri.begin);
    const auto rows_j = static_cast<Eigen::Index>(rj.end - rj.begin);
    const MatrixD block = unit.middleRows(static_cast<Eigen::Index>(ri.begin), rows_i) *
                          unit.middleRows(static_cast<Eigen::Index>(rj.begin), rows_j).transpose();
    for (Eigen::Index a = 0; a < rows_i; ++a) {
      const Eigen::Index i = static_cast<Eigen::Index>(ri.begin) + a;
      for (Eigen::Index b = 0; b < rows_j; ++b) {
        const Eigen::Index j = static_cast<Eigen::Index>(rj.begin) + b;
        if (j > i) break;
        double v;
        if (i == j) {
          v = nonzero[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        } else {
          v = std::clamp(block(a, b), 0.0, 1.0);
        }
        sim(i, j) = v;
        sim(j, i) = v;
      }
    }
  });
  return sim;
}

std::size_t nearest_rank_index(double quantile, std::size_t m) {
  if (m == 0) throw ValidationError("percentile of an empty multiset");
  // The 1e-9 slack absorbs representation error in quantile * m (e.g. 0.98 * 100).
  const double rank = std::ceil(quantile * static_cast<double>(m) - 1e-9);
  const auto r = static_cast<std::size_t>(std::max(1.0, rank));
  return std::min(r, m) - 1;
}

double percentile_threshold(std::span<const double> values, double quantile) {
  if (values.empty()) throw ValidationError("percentile of an empty multiset");
  if (!(quantile > 0.0 && quantile < 1.0)) throw ValidationError("quantile must lie in (0, 1)");
  std::vector<double> work(values.begin(), values.end());
  const std::size_t k = nearest_rank_index(quantile, work.size());
  std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(k), work.end());
  return work[k];
}

GateMask build_gate(const MatrixD& w_attn, const GateParams& params, int threads) {
  if (!(params.quantile > 0.0 && params.quantile < 1.0)) {
    throw ValidationError("gate quantile must lie in (0, 1)");
  }
  const int n = static_cast<int>(w_attn.rows());
  GateMask gate;
  if (params.include_diagonal) {
    gate.tau = percentile_threshold(std::span<const double>(w_attn.data(), static_cast<std::size_t>(w_attn.size())),
                                    params.quantile);
    gate.pool_size = static_cast<std::size_t>(w_attn.size());
  } else {
    std::vector<double> pool;
    pool.reserve(static_cast<std::size_t>(w_attn.size()) - static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j) pool.push_back(w_attn(i, j));
      }
    }
    gate.tau = percentile_threshold(pool, params.quantile);
    gate.pool_size = pool.size();
  }

  std::vector<std::vector<int>> row_cols(static_cast<std::size_t>(n));
  const double tau = gate.tau;
  const auto blocks = make_blocks(static_cast<std::size_t>(n), kRowBlock);
  parallel_for(blocks.size(), threads, [&](std::size_t b) {
    for (std::size_t i = blocks[b].begin; i < blocks[b].end; ++i) {
      const double* row = w_attn.data() + i * static_cast<std::size_t>(n);
      auto& out = row_cols[i];
      for (int j = 0; j < n; ++j) {
        if (row[j] > tau && (params.include_diagonal || static_cast<std::size_t>(j) != i)) out.push_back(j);
      }
    }
  });
  gate.pattern = assemble(n, row_cols, nullptr);
  gate.density = static_cast<double>(gate.pattern.nnz()) / static_cast<double>(gate.pool_size);
  return gate;
}

GateMask full_gate(int n) {
  GateMask gate;
  gate.pattern.n = n;
  gate.pattern.row_ptr.resize(static_cast<std::size_t>(n) + 1);
  gate.pattern.cols.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    gate.pattern.row_ptr[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(i) * n;
    for (int j = 0; j < n; ++j) gate.pattern.cols.push_back(j);
  }
  gate.pattern.row_ptr[static_cast<std::size_t>(n)] = static_cast<std::int64_t>(n) * n;
  gate.tau = -1.0;
  gate.density = 1.0;
  gate.pool_size = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  return gate;
}

CsrMatrix gated_output_affinity(const MatrixF& o_ii_mean, const GateMask& gate, int threads) {
  const CsrMatrix& g = gate.pattern;
  if (o_ii_mean.rows() != g.n) {
    throw ValidationError("output features have " + std::to_string(o_ii_mean.rows()) +
                          " rows, gate expects " + std::to_string(g.n));
  }
  const MatrixD unit = unit_rows(o_ii_mean);
  CsrMatrix out;
  out.n = g.n;
  out.row_ptr = g.row_ptr;
  out.cols = g.cols;
  out.values.assign(g.cols.size(), 0.0);
  const auto blocks = make_blocks(static_cast<std::size_t>(g.n), kRowBlock);
  parallel_for(blocks.size(), threads, [&](std::size_t b) {
    for (std::size_t i = blocks[b].begin; i < blocks[b].end; ++i) {
      const auto row_i = unit.row(static_cast<Eigen::Index>(i));
      for (std::int64_t e = g.row_ptr[i]; e < g.row_ptr[i + 1]; ++e) {
        const double c = row_i.dot(unit.row(g.cols[static_cast<std::size_t>(e)]));
        out.values[static_cast<std::size_t>(e)] = std::max(0.0, c);
      }
    }
  });
  return out;
}

HybridGraph normalize_rows(const CsrMatrix& w) {
  HybridGraph g;
  g.n = w.n;
  g.row_ptr = w.row_ptr;
  g.cols = w.cols;
  g.raw_weights = w.values;
  g.weights.assign(w.values.size(), 0.0);
  g.row_sums_pre_norm.assign(static_cast<std::size_t>(w.n), 0.0);
  for (int i = 0; i < w.n; ++i) {
    const auto begin = static_cast<std::size_t>(w.row_ptr[static_cast<std::size_t>(i)]);
    const auto end = static_cast<std::size_t>(w.row_ptr[static_cast<std::size_t>(i) + 1]);
    double sum = 0.0;
    for (std::size_t e = begin; e < end; ++e) {
      if (w.values[e] < 0.0) throw ValidationError("normalize_rows: negative weight");
      sum += w.values[e];
    }
    g.row_sums_pre_norm[static_cast<std::size_t>(i)] = sum;
    if (sum > 0.0) {
      for (std::size_t e = begin; e < end; ++e) g.weights[e] = w.values[e] / sum;
    }
  }

  // Transpose by counting sort; sources come out ascending because rows are visited in order.
  g.in_ptr.assign(static_cast<std::size_t>(w.n) + 1, 0);
  for (const int c : g.cols) ++g.in_ptr[static_cast<std::size_t>(c) + 1];
  for (int j = 0; j < w.n; ++j) g.in_ptr[static_cast<std::size_t>(j) + 1] += g.in_ptr[static_cast<std::size_t>(j)];
  g.in_src.resize(g.cols.size());
  g.in_weight.resize(g.cols.size());
  std::vector<std::int64_t> cursor(g.in_ptr.begin(), g.in_ptr.end() - 1);
  for (int i = 0; i < w.n; ++i) {
    for (std::int64_t e = g.row_ptr[static_cast<std::size_t>(i)]; e < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++e) {
      const int j = g.cols[static_cast<std::size_t>(e)];
      const auto slot = static_cast<std::size_t>(cursor[static_cast<std::size_t>(j)]++);
      g.in_src[slot] = i;
      g.in_weight[slot] = g.weights[static_cast<std::size_t>(e)];
    }
  }
  return g;
}

HybridGraph build_hybrid_graph(const AggregatedSignals& signals, const GateParams& params, int threads) {
  const MatrixD w_attn = row_similarity(signals.a_ii_mean, threads);
  const GateMask gate = build_gate(w_attn, params, threads);
  HybridGraph g = normalize_rows(gated_output_affinity(signals.o_ii_mean, gate, threads));
  g.tau_w = gate.tau;
  g.gate_density = gate.density;
  return g;
}

HybridGraph build_ungated_graph(const AggregatedSignals& signals, int threads) {
  const GateMask gate = full_gate(static_cast<int>(signals.o_ii_mean.rows()));
  HybridGraph g = normalize_rows(gated_output_affinity(signals.o_ii_mean, gate, threads));
  g.tau_w = gate.tau;
  g.gate_density = 1.0;
  return g;
}

void write_edge_list(const HybridGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << std::setprecision(17);
  for (int i = 0; i < graph.n; ++i) {
    for (std::int64_t e = graph.row_ptr[static_cast<std::size_t>(i)]; e < graph.row_ptr[static_cast<std::size_t>(i) + 1]; ++e) {
      out << i << ' ' << graph.cols[static_cast<std::size_t>(e)] << ' ' << graph.weights[static_cast<std::size_t>(e)] << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace anchorprop
