#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <queue>

#include "anchorprop/error.hpp"
#include "anchorprop/propagation.hpp"
#include "oracles.hpp"

using namespace anchorprop;

namespace {

HybridGraph graph_from_dense(const MatrixD& m) {
  CsrMatrix c;
  c.n = static_cast<int>(m.rows());
  c.row_ptr.push_back(0);
  for (int i = 0; i < c.n; ++i) {
    for (int j = 0; j < c.n; ++j) {
      if (m(i, j) != 0.0) {
        c.cols.push_back(j);
        c.values.push_back(m(i, j));
      }
    }
    c.row_ptr.push_back(static_cast<std::int64_t>(c.cols.size()));
  }
  return normalize_rows(c);
}

MatrixD dense_weights(const HybridGraph& g) {
  MatrixD m = MatrixD::Zero(g.n, g.n);
  for (int i = 0; i < g.n; ++i) {
    for (int j = 0; j < g.n; ++j) m(i, j) = g.weight(i, j);
  }
  return m;
}

HybridGraph random_graph(std::uint64_t seed, int n, double density, bool allow_zero_rows) {
  anchorprop::Rng rng(seed);
  MatrixD m = MatrixD::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (rng.bernoulli(density)) m(i, j) = rng.uniform();
    }
    if (!allow_zero_rows && m.row(i).sum() == 0.0) m(i, (i + 1) % n) = 1.0;
  }
  return graph_from_dense(m);
}

}  // namespace

TEST(Propagate, ZeroStepsIsOneHot) {
  const HybridGraph g = random_graph(1, 20, 0.2, false);
  const std::vector<double> s = propagate(g, 7, 0);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(s[static_cast<std::size_t>(i)], i == 7 ? 1.0 : 0.0);
}

TEST(Propagate, SelfLoopsAreFixedPoint) {
  const HybridGraph g = graph_from_dense(MatrixD::Identity(9, 9));
  for (int steps : {1, 5, 160}) {
    const std::vector<double> s = propagate(g, 4, steps);
    for (int i = 0; i < 9; ++i) EXPECT_EQ(s[static_cast<std::size_t>(i)], i == 4 ? 1.0 : 0.0);
  }
}

TEST(Propagate, MatchesDenseMatrixPower) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const HybridGraph g = random_graph(seed, 64, 0.1, true);
    const MatrixD w = dense_weights(g);
    for (int steps : {0, 1, 5, 20}) {
      const std::vector<double> s = propagate(g, 3, steps);
      const std::vector<double> o = oracle::dense_propagate(w, 3, steps);
      for (int i = 0; i < 64; ++i) ASSERT_NEAR(s[static_cast<std::size_t>(i)], o[static_cast<std::size_t>(i)], 1e-9);
    }
  }
}

TEST(Propagate, MassConservedWithoutZeroRows) {
  const HybridGraph g = random_graph(2, 100, 0.05, false);
  ASSERT_EQ(g.zero_row_count(), 0u);
  Propagator p(g, 0);
  for (int n = 1; n <= 160; ++n) {
    p.step();
    const double mass = std::accumulate(p.state().begin(), p.state().end(), 0.0);
    ASSERT_NEAR(mass, 1.0, 1e-6);
    ASSERT_TRUE(std::all_of(p.state().begin(), p.state().end(), [](double v) { return v >= 0.0; }));
  }
}

TEST(Propagate, ZeroRowAbsorbsNothingOnward) {
  MatrixD m = MatrixD::Zero(3, 3);
  m(0, 1) = 1.0;
  m(1, 2) = 1.0;
  const HybridGraph g = graph_from_dense(m);
  EXPECT_EQ(propagate(g, 0, 1)[1], 1.0);
  EXPECT_EQ(propagate(g, 0, 2)[2], 1.0);
  const auto s3 = propagate(g, 0, 3);
  EXPECT_EQ(std::accumulate(s3.begin(), s3.end(), 0.0), 0.0);
}

TEST(Propagate, SupportWithinBfsRadius) {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const HybridGraph g = random_graph(seed, 64, 0.03, true);
    std::vector<int> dist(64, -1);
    std::queue<int> q;
    dist[5] = 0;
    q.push(5);
    while (!q.empty()) {
      const int i = q.front();
      q.pop();
      for (std::int64_t e = g.row_ptr[static_cast<std::size_t>(i)]; e < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++e) {
        const int j = g.cols[static_cast<std::size_t>(e)];
        if (dist[static_cast<std::size_t>(j)] < 0) {
          dist[static_cast<std::size_t>(j)] = dist[static_cast<std::size_t>(i)] + 1;
          q.push(j);
        }
      }
    }
    Propagator p(g, 5);
    for (int n = 1; n <= 12; ++n) {
      p.step();
      for (int i = 0; i < 64; ++i) {
        if (p.state()[static_cast<std::size_t>(i)] > 0.0) {
          ASSERT_GE(dist[static_cast<std::size_t>(i)], 0);
          ASSERT_LE(dist[static_cast<std::size_t>(i)], n);
        }
      }
    }
  }
}

TEST(Propagate, ThreadCountBitIdentical) {
  const HybridGraph g = random_graph(3, 700, 0.02, true);
  const auto a = propagate(g, 11, 160, 1);
  const auto b = propagate(g, 11, 160, 5);
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
}

TEST(Propagate, IncrementalEqualsDirect) {
  const HybridGraph g = random_graph(4, 50, 0.1, true);
  Propagator p(g, 2);
  p.advance_to(10);
  EXPECT_EQ(p.steps(), 10);
  EXPECT_EQ(p.state(), propagate(g, 2, 10));
  p.advance_to(25);
  EXPECT_EQ(p.state(), propagate(g, 2, 25));
}

TEST(Propagate, BadArguments) {
  const HybridGraph g = random_graph(5, 10, 0.3, true);
  EXPECT_THROW(propagate(g, 10, 1), ValidationError);
  EXPECT_THROW(propagate(g, -1, 1), ValidationError);
  EXPECT_THROW(propagate(g, 0, -1), ValidationError);
}

TEST(MinMax, Arithmetic) {
  const std::vector<double> raw{0.0, 2.0, 4.0};
  const HeatMap h = normalize_minmax(raw, {1, 3}, 7);
  EXPECT_EQ(h.values, (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_FALSE(h.degenerate);
  EXPECT_EQ(h.steps_used, 7);
}

TEST(MinMax, ConstantIsDegenerate) {
  const std::vector<double> raw(6, 0.3);
  const HeatMap h = normalize_minmax(raw, {2, 3});
  EXPECT_TRUE(h.degenerate);
  EXPECT_TRUE(std::all_of(h.values.begin(), h.values.end(), [](double v) { return v == 0.0; }));
}

TEST(MinMax, EndpointsExactOnPropagationOutput) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const HybridGraph g = random_graph(seed, 36, 0.15, true);
    const HeatMap h = normalize_minmax(propagate(g, 0, 7), {6, 6});
    if (h.degenerate) continue;
    EXPECT_EQ(*std::min_element(h.values.begin(), h.values.end()), 0.0);
    EXPECT_EQ(*std::max_element(h.values.begin(), h.values.end()), 1.0);
    for (double v : h.values) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(MinMax, RejectsNonFinite) {
  const std::vector<double> raw{0.0, std::nan(""), 1.0, 2.0};
  EXPECT_THROW(normalize_minmax(raw, {2, 2}), ValidationError);
}

TEST(Binarize, StrictAtMean) {
  HeatMap h;
  h.grid = {2, 2};
  h.values = {0.0, 0.5, 1.0, 0.5};
  const BinaryMask m = binarize_mean(h);
  EXPECT_EQ(m.threshold_used, 0.5);
  EXPECT_EQ(m.bits, (std::vector<std::uint8_t>{0, 0, 1, 0}));
  EXPECT_EQ(m.count(), 1u);
  EXPECT_FALSE(m.degenerate);
}

TEST(Binarize, DegenerateIsEmpty) {
  const HeatMap h = normalize_minmax(std::vector<double>(4, 1.0), {2, 2});
  const BinaryMask m = binarize_mean(h);
  EXPECT_TRUE(m.degenerate);
  EXPECT_EQ(m.count(), 0u);
}

TEST(Binarize, BitsAgreeWithThreshold) {
  anchorprop::Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> raw(25);
    for (double& v : raw) v = rng.uniform();
    const HeatMap h = normalize_minmax(raw, {5, 5});
    const BinaryMask m = binarize_mean(h);
    const double mean = std::accumulate(h.values.begin(), h.values.end(), 0.0) / 25.0;
    EXPECT_NEAR(m.threshold_used, mean, 1e-15);
    for (std::size_t i = 0; i < 25; ++i) ASSERT_EQ(m.bits[i] != 0, h.values[i] > m.threshold_used);
  }
}
