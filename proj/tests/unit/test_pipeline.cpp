#include <gtest/gtest.h>

#include "anchorprop/error.hpp"
#include "anchorprop/pipeline.hpp"
#include "anchorprop/synth.hpp"
#include "oracles.hpp"

using namespace anchorprop;

TEST(Presets, NamedLayerSets) {
  EXPECT_EQ(graph_layer_preset("sd3-default"), (std::vector<int>{9, 18}));
  EXPECT_EQ(graph_layer_preset("sd35-paper"), (std::vector<int>{10, 23}));
  EXPECT_EQ(graph_layer_preset("sd35-appendix"), (std::vector<int>{23, 31}));
  EXPECT_THROW(graph_layer_preset("sd4"), ValidationError);
  const PipelineConfig c;
  EXPECT_EQ(c.gate_quantile, 0.98);
  EXPECT_EQ(c.n_steps, 160);
  EXPECT_EQ(c.graph_layers, (std::vector<int>{9, 18}));
  EXPECT_FALSE(c.anchor_layers.has_value());
}

TEST(Ground, IdentityGraphGivesAnchorOnly) {
  AttentionBundle b = oracle::random_bundle(4, {4, 4}, 1, {9, 18}, 4);
  for (LayerTensors& t : b.tensors) {
    t.a_ii = MatrixF::Identity(16, 16);
    t.o_ii.setConstant(1.0f);
  }
  PipelineConfig cfg;
  cfg.gate_quantile = 0.5;
  const GroundingResult r = ground(b, 0, cfg);
  EXPECT_EQ(r.mask.count(), 1u);
  EXPECT_EQ(r.mask.bits[static_cast<std::size_t>(r.anchor.token_index)], 1);
  EXPECT_EQ(r.heat.values[static_cast<std::size_t>(r.anchor.token_index)], 1.0);
}

TEST(Ground, DistinctAnchorsForDistinctConcepts) {
  const SyntheticScene s = generate(standard_scene_spec(7, 3));
  const GroundingSession session(s.bundle, PipelineConfig{});
  EXPECT_NE(session.ground(0).anchor.token_index, session.ground(1).anchor.token_index);
  EXPECT_EQ(session.ground(0).heat.steps_used, 160);
}

TEST(Ground, LayerSetsValidated) {
  const AttentionBundle b = oracle::random_bundle(5, {4, 4}, 1, {9, 18}, 4);
  PipelineConfig cfg;
  cfg.graph_layers = {10, 23};
  EXPECT_THROW(GroundingSession(b, cfg), ValidationError);
  cfg.graph_layers = {9};
  cfg.anchor_layers = std::vector<int>{31};
  EXPECT_THROW(GroundingSession(b, cfg), ValidationError);
  cfg.anchor_layers.reset();
  cfg.gate_quantile = 1.5;
  EXPECT_THROW(GroundingSession(b, cfg), ValidationError);
  cfg.gate_quantile = 0.9;
  cfg.n_steps = -1;
  EXPECT_THROW(GroundingSession(b, cfg), ValidationError);
  cfg.n_steps = 5;
  const GroundingSession ok(b, cfg);
  EXPECT_THROW(ok.ground(1), ValidationError);
}

TEST(Ground, AnchorLayersDefaultToAll) {
  AttentionBundle b = oracle::random_bundle(6, {4, 4}, 1, {9, 18}, 4);
  // Layer 9 peaks at token 2, layer 18 at token 7 (stronger); the mean peaks at 7.
  for (int l = 0; l < 2; ++l) {
    MatrixF& a = b.tensors[static_cast<std::size_t>(l)].a_ci;
    a.setConstant(0.0f);
    a(0, l == 0 ? 2 : 7) = 1.0f;
    a(0, l == 0 ? 7 : 2) = 0.0f;
    a.row(0) = (a.row(0).array() + 0.01f).matrix();
    a.row(0) /= a.row(0).sum();
  }
  b.tensors[1].a_ci(0, 7) *= 1.5f;
  b.tensors[1].a_ci.row(0) /= b.tensors[1].a_ci.row(0).sum();
  PipelineConfig cfg;
  cfg.graph_layers = {9};
  EXPECT_EQ(GroundingSession(b, cfg).anchor(0).token_index, 7);
  cfg.anchor_layers = std::vector<int>{9};
  EXPECT_EQ(GroundingSession(b, cfg).anchor(0).token_index, 2);
}

TEST(Ground, StepsMatchIndividualRuns) {
  const SyntheticScene s = generate(standard_scene_spec(7, 4));
  const GroundingSession session(s.bundle, PipelineConfig{});
  const std::vector<int> steps{40, 0, 10};
  const auto results = session.ground_steps(0, steps);
  ASSERT_EQ(results.size(), 3u);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    PipelineConfig cfg;
    cfg.n_steps = steps[i];
    const GroundingResult r = GroundingSession(s.bundle, cfg).ground(0);
    EXPECT_EQ(results[i].heat.values, r.heat.values);
    EXPECT_EQ(results[i].heat.steps_used, steps[i]);
  }
}

TEST(Ground, ThreadCountIndependent) {
  const SyntheticScene s = generate(standard_scene_spec(7, 5));
  PipelineConfig one, four;
  four.threads = 4;
  const GroundingResult a = GroundingSession(s.bundle, one).ground(1);
  const GroundingResult b = GroundingSession(s.bundle, four).ground(1);
  EXPECT_EQ(a.heat.values, b.heat.values);
  EXPECT_EQ(a.mask.bits, b.mask.bits);
}

TEST(Ground, VariantNames) {
  EXPECT_EQ(to_string(GroundingVariant::kFull), "full");
  EXPECT_EQ(to_string(GroundingVariant::kConceptAttentionOnly), "concept-attention-only");
  EXPECT_EQ(to_string(GroundingVariant::kUngated), "ungated");
}
