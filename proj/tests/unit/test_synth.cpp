#include <gtest/gtest.h>

#include <cstring>
#include <set>

#include "anchorprop/error.hpp"
#include "anchorprop/synth.hpp"
#include "oracles.hpp"

using namespace anchorprop;

namespace {

bool same_bytes(const MatrixF& a, const MatrixF& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

SceneSpec two_object_spec() {
  SceneSpec spec;
  spec.image_id = "two";
  spec.grid = {16, 16};
  spec.objects.push_back({"cat", rect_region(spec.grid, 2, 2, 6, 6), 1, -1});
  spec.objects.push_back({"dog", ellipse_region(spec.grid, 11.0, 11.0, 3.5, 3.5), 2, -1});
  spec.confusable_pairs = {{0, 1}};
  spec.rng_seed = 99;
  return spec;
}

}  // namespace

TEST(Synth, RowsAreSoftmax) {
  const SyntheticScene s = generate(two_object_spec());
  validate_bundle(s.bundle);
  for (const LayerTensors& t : s.bundle.tensors) {
    for (int i = 0; i < t.a_ii.rows(); ++i) ASSERT_NEAR(t.a_ii.row(i).cast<double>().sum(), 1.0, 1e-6);
    for (int k = 0; k < t.a_ci.rows(); ++k) ASSERT_NEAR(t.a_ci.row(k).cast<double>().sum(), 1.0, 1e-6);
  }
}

TEST(Synth, Deterministic) {
  const SyntheticScene a = generate(two_object_spec());
  const SyntheticScene b = generate(two_object_spec());
  for (std::size_t l = 0; l < a.bundle.tensors.size(); ++l) {
    EXPECT_TRUE(same_bytes(a.bundle.tensors[l].a_ii, b.bundle.tensors[l].a_ii));
    EXPECT_TRUE(same_bytes(a.bundle.tensors[l].a_ci, b.bundle.tensors[l].a_ci));
    EXPECT_TRUE(same_bytes(a.bundle.tensors[l].o_ii, b.bundle.tensors[l].o_ii));
  }
  EXPECT_EQ(a.annotation.masks, b.annotation.masks);
  SceneSpec other = two_object_spec();
  other.rng_seed = 100;
  EXPECT_FALSE(same_bytes(generate(other).bundle.tensors[0].a_ii, a.bundle.tensors[0].a_ii));
}

TEST(Synth, RejectsBadSpecs) {
  SceneSpec overlap = two_object_spec();
  overlap.objects[1].tokens = rect_region(overlap.grid, 4, 4, 4, 4);
  EXPECT_THROW(generate(overlap), ValidationError);
  SceneSpec empty = two_object_spec();
  empty.objects[1].tokens.clear();
  EXPECT_THROW(generate(empty), ValidationError);
  SceneSpec conf = two_object_spec();
  conf.confusable_pairs = {{0, 2}};
  EXPECT_THROW(generate(conf), ValidationError);
  SceneSpec noise = two_object_spec();
  noise.noise_layers = {5};
  EXPECT_THROW(generate(noise), ValidationError);
  SceneSpec anchor = two_object_spec();
  anchor.objects[0].anchor_token = 255;
  EXPECT_THROW(generate(anchor), ValidationError);
}

TEST(Synth, AnnotationRenderedAtPixelScale) {
  const SyntheticScene s = generate(two_object_spec());
  EXPECT_EQ(s.annotation.pixel_h, 256);
  EXPECT_EQ(s.annotation.masks[0].count(), 36u * 256u);
  const auto labels = project_to_tokens(s.annotation, s.bundle.grid);
  const SceneSpec spec = two_object_spec();
  for (const int t : spec.objects[0].tokens) EXPECT_EQ(labels[static_cast<std::size_t>(t)], 0);
}

TEST(Synth, PlantedAnchorsInsideObjects) {
  const SyntheticScene s = generate(two_object_spec());
  const std::vector<int> layers = s.bundle.layers;
  const AggregatedSignals sig = aggregate_layers(s.bundle, layers);
  for (int k = 0; k < 2; ++k) {
    const Anchor a = select_anchor(sig.a_ci_mean, k);
    EXPECT_EQ(a.token_index, s.anchors[static_cast<std::size_t>(k)]);
    EXPECT_EQ(a.tie_count, 1);
    EXPECT_TRUE(anchor_hit(a, s.annotation.masks[static_cast<std::size_t>(k)], s.bundle.grid));
  }
}

TEST(Synth, SameObjectRowsMoreSimilar) {
  EXPECT_TRUE(rows_are_object_coherent(generate(two_object_spec()).bundle, generate(two_object_spec()).annotation));
}

TEST(Synth, SingleObjectEverywhereGroundsPerfectly) {
  SceneSpec spec;
  spec.grid = {6, 6};
  spec.objects.push_back({"sky", rect_region(spec.grid, 0, 0, 6, 6), 3, -1});
  spec.rng_seed = 4;
  const SyntheticScene s = generate(spec);
  for (int steps : {0, 10, 160}) {
    PipelineConfig cfg;
    cfg.n_steps = steps;
    const GroundingResult r = ground(s.bundle, 0, cfg);
    const PixelMask* target = s.annotation.find("sky");
    EXPECT_TRUE(anchor_hit(r.anchor, *target, s.bundle.grid));
  }
}

TEST(Synth, AblationDirectionOnTwoObjectScene) {
  SceneSpec spec = standard_scene_spec(7, 1);
  spec.objects.resize(2);
  spec.confusable_pairs = {{0, 1}};
  const SyntheticScene s = generate(spec);
  const Scene scene{spec.image_id, s.bundle, s.annotation};
  const MetricsReport full = evaluate_scenes(std::span<const Scene>(&scene, 1), PipelineConfig{});
  const MetricsReport aci = evaluate_scenes(std::span<const Scene>(&scene, 1), PipelineConfig{},
                                            GroundingVariant::kConceptAttentionOnly);
  EXPECT_LE(full.nar, 0.05);
  EXPECT_GE(aci.nar, 0.2);
}

TEST(Synth, MaskConfinedToTarget) {
  const SyntheticScene s = generate(standard_scene_spec(7, 2));
  const GroundingSession session(s.bundle, PipelineConfig{});
  for (int k = 0; k < s.bundle.k(); ++k) {
    const GroundingResult r = session.ground(k);
    const auto labels = project_to_tokens(s.annotation, s.bundle.grid);
    std::size_t target = 0, hit = 0;
    std::vector<std::size_t> other_size(static_cast<std::size_t>(s.bundle.k()), 0), other_hit(other_size);
    for (int t = 0; t < s.bundle.n(); ++t) {
      const int l = labels[static_cast<std::size_t>(t)];
      if (l < 0) continue;
      const bool on = r.mask.bits[static_cast<std::size_t>(t)] != 0;
      if (l == k) {
        ++target;
        hit += on;
      } else {
        ++other_size[static_cast<std::size_t>(l)];
        other_hit[static_cast<std::size_t>(l)] += on;
      }
    }
    EXPECT_GE(static_cast<double>(hit), 0.9 * static_cast<double>(target));
    for (std::size_t o = 0; o < other_size.size(); ++o) {
      if (other_size[o] > 0) EXPECT_LE(static_cast<double>(other_hit[o]), 0.05 * static_cast<double>(other_size[o]));
    }
  }
}

TEST(Suite, DeterministicAndThreadIndependent) {
  const SuiteReport a = standard_suite(4, 7, 1);
  const SuiteReport b = standard_suite(4, 7, 3);
  ASSERT_EQ(a.scenes.size(), 4u);
  std::set<std::size_t> objects;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.scenes[i].image_id, b.scenes[i].image_id);
    EXPECT_TRUE(same_bytes(a.scenes[i].bundle.tensors[1].a_ii, b.scenes[i].bundle.tensors[1].a_ii));
    EXPECT_EQ(a.scenes[i].annotation.masks, b.scenes[i].annotation.masks);
    EXPECT_EQ(a.anchors[i], b.anchors[i]);
    objects.insert(a.scenes[i].bundle.concepts.size());
    EXPECT_EQ(a.scenes[i].bundle.grid, (GridShape{32, 32}));
  }
  EXPECT_EQ(a.scenes[0].image_id, "scene_000");
  EXPECT_THROW(standard_suite(0, 7), ValidationError);
}

TEST(Suite, SpecsAreValidAndVaried) {
  std::set<std::size_t> counts;
  for (int i = 0; i < 40; ++i) {
    const SceneSpec spec = standard_scene_spec(7, i);
    EXPECT_NO_THROW(validate_scene_spec(spec));
    counts.insert(spec.objects.size());
    EXPECT_EQ(spec.confusable_pairs.front(), (std::pair<int, int>{0, 1}));
  }
  EXPECT_EQ(counts, (std::set<std::size_t>{2, 3}));
}
