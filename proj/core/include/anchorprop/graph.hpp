#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "anchorprop/tensor_io.hpp"
#include "anchorprop/types.hpp"

namespace anchorprop {

struct GateParams {
  double quantile = 0.98;
  bool include_diagonal = true;
};

/// Square n x n sparse matrix in compressed-row form. Columns ascend within each row.
/// `values` is empty when the matrix is used as a pure pattern (a gate).
struct CsrMatrix {
  int n = 0;
  std::vector<std::int64_t> row_ptr;
  std::vector<int> cols;
  std::vector<double> values;

  std::size_t nnz() const { return cols.size(); }
  bool contains(int i, int j) const;
  /// Value at (i, j), 0 when absent.
  double value(int i, int j) const;
};

struct GateMask {
  CsrMatrix pattern;
  double tau = 0.0;         // realized nearest-rank threshold
  double density = 0.0;     // surviving entries / pooled entries
  std::size_t pool_size = 0;
};

/// Row-normalized propagation operator, plus the raw gated weights it came from.
struct HybridGraph {
  int n = 0;
  std::vector<std::int64_t> row_ptr;
  std::vector<int> cols;
  std::vector<double> weights;      // normalized, each nonzero row sums to 1
  std::vector<double> raw_weights;  // W_cos * G before normalization
  std::vector<double> row_sums_pre_norm;
  double tau_w = 0.0;
  double gate_density = 0.0;

  // Incoming edges (the transpose), sources ascending per target; used by propagation.
  std::vector<std::int64_t> in_ptr;
  std::vector<int> in_src;
  std::vector<double> in_weight;

  std::size_t edge_count() const { return cols.size(); }
  std::size_t zero_row_count() const;
  /// Normalized weight at (i, j), 0 when absent.
  double weight(int i, int j) const;
};

/// Cosine similarity between rows of a non-negative matrix. Symmetric, diagonal
/// exactly 1 for nonzero rows, zero rows give 0, values clamped to [0, 1].
/// Computed in double precision with a fixed block decomposition, so results do
/// not depend on `threads`.
MatrixD row_similarity(const MatrixF& a_ii_mean, int threads = 1);

/// 0-based position of the nearest-rank quantile in an ascending multiset of size m:
/// ceil(quantile * m) - 1, clamped to [0, m - 1].
std::size_t nearest_rank_index(double quantile, std::size_t m);

/// Nearest-rank percentile found by selection (no full sort).
double percentile_threshold(std::span<const double> values, double quantile);

/// Keeps entries strictly greater than the nearest-rank threshold of the pooled entries.
GateMask build_gate(const MatrixD& w_attn, const GateParams& params, int threads = 1);

/// Every (i, j) pair; used for the ungated ablation.
GateMask full_gate(int n);

/// Cosine of output-feature rows at gated positions only, negatives clamped to 0.
CsrMatrix gated_output_affinity(const MatrixF& o_ii_mean, const GateMask& gate, int threads = 1);

/// Divides each nonzero row by its sum. Zero rows stay zero (sum recorded as 0).
HybridGraph normalize_rows(const CsrMatrix& w);

/// row_similarity -> build_gate -> gated_output_affinity -> normalize_rows.
HybridGraph build_hybrid_graph(const AggregatedSignals& signals, const GateParams& params,
                               int threads = 1);

/// Output-space affinity over all pairs, no structural gate.
HybridGraph build_ungated_graph(const AggregatedSignals& signals, int threads = 1);

/// Debug dump: one "i j w" line per edge.
void write_edge_list(const HybridGraph& graph, const std::filesystem::path& path);

}  // namespace anchorprop
