#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fineparser/error.h"
#include "fineparser/losses.h"
#include "fineparser/model.h"
#include "fineparser/trainer.h"
#include "gradcheck.h"

using namespace fineparser;
using fineparser::testing::gradient_error;
using fineparser::testing::random_tensor;

namespace {

BackboneConfig tiny_backbone() {
  BackboneConfig c;
  c.stages = {{{2, {1, 1, 1}, {2, 2, 2}}, {2, {1, 2, 2}, {1, 1, 1}}, {3, {1, 1, 1}, {1, 1, 1}}, {3, {1, 1, 1}, {1, 1, 1}}}};
  c.embedding_channels = 2;
  return c;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

std::vector<Tensor> range_rows(int T, int C) {
  std::vector<double> v(static_cast<std::size_t>(T) * C);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  return {Tensor({T, C}, v)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Backbone

TEST(Backbone, DefaultDeclaredShapes) {
  const auto s = declared_shapes(BackboneConfig{}, {16, 32, 32});
  EXPECT_EQ(s.stages[0], (Shape{4, 8, 16, 16}));
  EXPECT_EQ(s.stages[1], (Shape{8, 8, 8, 8}));
  EXPECT_EQ(s.stages[2], (Shape{16, 4, 4, 4}));
  EXPECT_EQ(s.stages[3], (Shape{16, 4, 2, 2}));
  EXPECT_EQ(s.embedding, (Shape{16, 4, 1, 1}));
}

TEST(Backbone, RealizedShapesMatchDeclaredOverGrid) {
  Rng rng(1);
  const std::vector<Dim3> inputs = {{16, 32, 32}, {8, 16, 16}, {4, 8, 8}, {6, 12, 8}};
  const std::vector<Dim3> strides = {{1, 1, 1}, {2, 2, 2}, {1, 2, 2}};
  for (const Dim3& in : inputs) {
    for (const Dim3& st : strides) {
      BackboneConfig c = tiny_backbone();
      c.stages[0].conv_stride = st;
      c.stages[2].pool = {1, 1, 1};
      ParameterStore store;
      Backbone b(c, in, store, "b", ParamGroup::sap, rng);
      NoGradGuard g;
      const auto f = b.extract_staged(random_tensor({2, 3, in[0], in[1], in[2]}, rng, false));
      for (int j = 0; j < 4; ++j) {
        Shape want = b.shapes().stages[j];
        want.insert(want.begin(), 2);
        EXPECT_EQ(f.stage_outputs[j].shape(), want) << "stage " << j + 1;
      }
      Shape emb = b.shapes().embedding;
      emb.insert(emb.begin(), 2);
      EXPECT_EQ(f.embedding.shape(), emb);
    }
  }
}

TEST(Backbone, DefaultConfigOnNineSnippets) {
  Rng rng(2);
  ParameterStore store;
  Backbone b(BackboneConfig{}, {16, 32, 32}, store, "b", ParamGroup::sap, rng);
  NoGradGuard g;
  const Tensor x = random_tensor({9, 3, 16, 32, 32}, rng, false, -0.5, 0.5);
  const auto a = b.extract_staged(x), c = b.extract_staged(x);
  for (int j = 0; j < 4; ++j) {
    EXPECT_EQ(a.stage_outputs[j].size(0), 9);
    EXPECT_TRUE(bit_equal(a.stage_outputs[j], c.stage_outputs[j]));
  }
  EXPECT_TRUE(bit_equal(a.embedding, c.embedding));
}

TEST(Backbone, ZeroInputIsFinite) {
  Rng rng(3);
  ParameterStore store;
  Backbone b(BackboneConfig{}, {16, 32, 32}, store, "b", ParamGroup::sap, rng);
  NoGradGuard g;
  const auto f = b.extract_staged(Tensor::zeros({9, 3, 16, 32, 32}));
  for (const auto& t : f.stage_outputs) {
    for (double v : t.values()) ASSERT_TRUE(std::isfinite(v));
  }
  for (double v : f.embedding.values()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Backbone, InputMismatchIsConfigError) {
  Rng rng(4);
  ParameterStore store;
  Backbone b(BackboneConfig{}, {16, 32, 32}, store, "b", ParamGroup::sap, rng);
  EXPECT_THROW(b.extract_staged(Tensor::zeros({1, 3, 8, 32, 32})), ConfigError);
  BackboneConfig bad;
  bad.stages[1].pool = {1, 3, 3};
  EXPECT_THROW(bad.validate({16, 32, 32}), ConfigError);
}

TEST(Backbone, InstancesDoNotShareParameters) {
  FineParserModel m(ModelConfig{});
  const auto& store = m.parameters();
  EXPECT_NE(store.checksum("sap.backbone"), store.checksum("tap.backbone"));
  std::set<std::string> names;
  std::set<const void*> nodes;
  for (const auto& p : store.all()) {
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
    EXPECT_TRUE(nodes.insert(p.tensor.node().get()).second) << p.name;
  }
  EXPECT_EQ(m.sap_backbone().shapes().embedding, m.tap_backbone().shapes().embedding);
}

TEST(Backbone, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  ParameterStore store;
  Backbone b(tiny_backbone(), {4, 8, 8}, store, "b", ParamGroup::sap, rng);
  const Tensor x = random_tensor({1, 3, 4, 8, 8}, rng, false);
  std::vector<Tensor> leaves;
  for (const auto& p : store.all()) leaves.push_back(p.tensor);
  const Tensor probe = random_tensor({1, 2, 2, 1, 1}, rng, false);
  auto loss = [&] {
    const auto f = b.extract_staged(x);
    return add(sum(mul(f.embedding, probe)), scale(sum(f.stage_outputs[1]), 0.1));
  };
  EXPECT_LT(gradient_error(loss, leaves, 1e-6, 1e-4, 60), 1e-3);
}

TEST(Backbone, MismatchedEmbeddingsRejectedAtBuild) {
  ModelConfig c;
  c.tap_backbone.embedding_channels = 8;
  EXPECT_THROW(FineParserModel{c}, ConfigError);
}

// ---------------------------------------------------------------------------
// Spatial parser

class SapFixture : public ::testing::Test {
 protected:
  SapFixture() : model(ModelConfig{}) {}
  FineParserModel model;
};

TEST_F(SapFixture, PyramidResolutionAndRange) {
  Rng rng(6);
  NoGradGuard g;
  const Tensor x = random_tensor({9, 3, 16, 32, 32}, rng, false, -0.5, 0.5);
  const auto p = model.spatial_parser().build_pyramid(model.sap_backbone().extract_staged(x));
  for (const auto& m : p.supervised()) {
    EXPECT_EQ(m.shape(), (Shape{96, 32, 32}));
    for (double v : m.values()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
  for (const auto& u : p.up1) EXPECT_EQ(u.shape(), (Shape{9, 1, 16, 32, 32}));
}

TEST_F(SapFixture, FuseMasksContract) {
  Rng rng(7);
  NoGradGuard g;
  const Tensor t = random_tensor({1, 1, 16, 32, 32}, rng, false);
  const std::vector<Tensor> same = {t, t, t, t};
  EXPECT_EQ(model.spatial_parser().fuse_masks(same).shape(), (Shape{1, 1, 16, 32, 32}));

  std::vector<Tensor> parts;
  for (int i = 0; i < 4; ++i) parts.push_back(random_tensor({1, 1, 16, 32, 32}, rng, false));
  const std::vector<Tensor> swapped = {parts[1], parts[0], parts[2], parts[3]};
  const Tensor a = model.spatial_parser().fuse_masks(parts), b = model.spatial_parser().fuse_masks(swapped);
  EXPECT_FALSE(bit_equal(a, b));

  const Tensor z = Tensor::zeros({1, 1, 16, 32, 32});
  const std::vector<Tensor> zeros = {z, z, z, z};
  const Tensor fz = model.spatial_parser().fuse_masks(zeros);
  const double bias = model.parameters().find("sap.fuse.bias")->tensor.values()[0];
  for (double v : fz.values()) ASSERT_DOUBLE_EQ(v, 1.0 / (1.0 + std::exp(-bias)));

  const std::vector<Tensor> three = {t, t, t};
  EXPECT_THROW(model.spatial_parser().fuse_masks(three), ShapeError);
}

TEST_F(SapFixture, EveryStageReceivesMaskGradient) {
  SyntheticConfig sc;
  sc.count = 1;
  const auto s = generate_synthetic(sc)[0];
  const auto staged = model.sap_backbone().extract_staged(snippet_tensor(s, model.config().layout));
  const auto p = model.spatial_parser().build_pyramid(staged);
  const auto masks = p.supervised();
  model.parameters().zero_grad();
  focal_mask_loss(masks, s.masks, {}).backward();
  for (int j = 1; j <= 4; ++j) {
    const auto* w = model.parameters().find("sap.backbone.stage" + std::to_string(j) + ".weight");
    ASSERT_NE(w, nullptr);
    double norm = 0.0;
    for (double g : w->tensor.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0) << "stage " << j;
  }
}

TEST(Sap, OffResolutionStageIsNamed) {
  BackboneShapes shapes = declared_shapes(BackboneConfig{}, {16, 32, 32});
  shapes.stages[2] = {16, 4, 3, 3};
  ParameterStore store;
  Rng rng(1);
  try {
    SpatialParser sp(SapConfig{}, shapes, {16, 32, 32}, SnippetLayout{}, store, rng);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 3"), std::string::npos) << e.what();
  }
}

TEST(Sap, GateExamplesAndBound) {
  Rng rng(8);
  const Tensor v = random_tensor({2, 3, 4, 1, 1}, rng, false, -3, 3);
  const Tensor big = Tensor::full(v.shape(), 50.0);
  const Tensor gated_big = gate_target_representation(v, big);
  for (int i = 0; i < v.numel(); ++i) EXPECT_NEAR(gated_big.values()[i], v.values()[i], 1e-12);
  const Tensor half = gate_target_representation(v, Tensor::zeros(v.shape()));
  for (int i = 0; i < v.numel(); ++i) EXPECT_DOUBLE_EQ(half.values()[i], 0.5 * v.values()[i]);
  for (int it = 0; it < 100; ++it) {
    const Tensor m = random_tensor(v.shape(), rng, false, -10, 10);
    const Tensor x = gate_target_representation(v, m);
    for (int i = 0; i < v.numel(); ++i) ASSERT_LE(std::abs(x.values()[i]), std::abs(v.values()[i]));
  }
  EXPECT_THROW(gate_target_representation(v, Tensor::zeros({2, 3, 4})), ShapeError);
}

TEST(Sap, BinarizeMask) {
  const std::vector<double> hi(5, 0.9), lo(5, 0.1);
  EXPECT_EQ(binarize_mask(hi, 0.5), std::vector<std::uint8_t>(5, 1));
  EXPECT_EQ(binarize_mask(lo, 0.5), std::vector<std::uint8_t>(5, 0));
  Rng rng(9);
  std::vector<double> p(500);
  for (auto& x : p) x = rng.uniform();
  const auto b = binarize_mask(p, 0.3);
  for (std::size_t i = 0; i < p.size(); ++i) ASSERT_EQ(b[i], p[i] > 0.3 ? 1 : 0);
}

TEST(Sap, TrainsTowardBackgroundOnConstantVideos) {
  ModelConfig mc;
  FineParserModel m(mc);
  SyntheticConfig sc;
  sc.count = 1;
  VideoSample s = generate_synthetic(sc)[0];
  std::fill(s.frames.begin(), s.frames.end(), 0.4f);
  std::fill(s.masks.begin(), s.masks.end(), 0);
  TrainConfig tc;
  OptimizerState state;
  Adam adam(tc, m.parameters(), state);
  const Tensor x = snippet_tensor(s, mc.layout);
  double fused_mean = 1.0;
  for (int step = 0; step < 3; ++step) {
    m.parameters().zero_grad();
    const auto p = m.spatial_parser().build_pyramid(m.sap_backbone().extract_staged(x));
    const auto masks = p.supervised();
    focal_mask_loss(masks, s.masks, tc.focal).backward();
    adam.step();
  }
  NoGradGuard g;
  const auto p = m.spatial_parser().build_pyramid(m.sap_backbone().extract_staged(x));
  fused_mean = mean(p.fused).item();
  EXPECT_LT(fused_mean, 0.1);
}

// ---------------------------------------------------------------------------
// Temporal parser

TEST(Tap, TransitionProbabilityContract) {
  FineParserModel m(ModelConfig{});
  SyntheticConfig sc;
  sc.count = 1;
  const auto s = generate_synthetic(sc)[0];
  NoGradGuard g;
  const auto a = m.represent(s), b = m.represent(s);
  EXPECT_EQ(a.transition_probs.shape(), (Shape{96, 2}));
  for (double v : a.transition_probs.values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_TRUE(bit_equal(a.transition_probs, b.transition_probs));
  ASSERT_EQ(a.tap_steps.size(), 3u);
  for (const auto& st : a.tap_steps) EXPECT_EQ(st.shape(), (Shape{8, 16}));
}

TEST(Tap, LocateWorkedExample) {
  // T = 8, L' = 2; column 1 peaks at frame 2 inside (0, 4].
  const std::vector<double> col1 = {.1, .9, .2, .3, .95, .1, .1, .1};
  const std::vector<double> col2 = {.9, .1, .1, .1, .2, .1, .7, .99};
  std::vector<double> probs;
  for (int t = 0; t < 8; ++t) {
    probs.push_back(col1[t]);
    probs.push_back(col2[t]);
  }
  const auto ts = locate_transitions(probs, 2, 8);
  EXPECT_EQ(ts.timestamps(), (std::vector<int>{2, 7}));
}

TEST(Tap, LocateUniformPicksFirstFrameOfEachBin) {
  const std::vector<double> probs(96 * 3, 0.25);
  EXPECT_EQ(locate_transitions(probs, 3, 96).timestamps(), (std::vector<int>{1, 33, 65}));
}

TEST(Tap, LocateMatchesBruteForceAndRespectsBins) {
  Rng rng(10);
  for (int it = 0; it < 2000; ++it) {
    const int L = 1 + static_cast<int>(rng.below(4));
    const int T = L + 1 + static_cast<int>(rng.below(40));
    std::vector<double> probs(static_cast<std::size_t>(T) * L);
    for (auto& p : probs) p = static_cast<double>(rng.below(5)) / 4.0;
    const auto ts = locate_transitions(probs, L, T).timestamps();
    ASSERT_EQ(ts.size(), static_cast<std::size_t>(L));
    for (int k = 1; k <= L; ++k) {
      const int lo = (k - 1) * T / L;
      const int hi = std::min(k * T / L, T - 1);
      int best = -1;
      double best_p = -1;
      for (int t = lo + 1; t <= hi; ++t) {
        if (probs[(t - 1) * L + (k - 1)] > best_p) {
          best_p = probs[(t - 1) * L + (k - 1)];
          best = t;
        }
      }
      ASSERT_EQ(ts[k - 1], best);
      if (k > 1) ASSERT_GT(ts[k - 1], ts[k - 2]);
    }
  }
}

TEST(Tap, SegmentStepsPartition) {
  const Tensor f = range_rows(96, 3)[0];
  const TransitionSet ts({32, 64}, 96);
  const auto steps = segment_steps(f, ts);
  ASSERT_EQ(steps.size(), 3u);
  for (const auto& s : steps) EXPECT_EQ(s.size(0), 32);
  EXPECT_TRUE(bit_equal(concat(steps, 0), f));

  Rng rng(11);
  for (int seed = 0; seed < 1000; ++seed) {
    const int L = 1 + static_cast<int>(rng.below(4)), T = L + 1 + static_cast<int>(rng.below(60));
    std::vector<double> probs(static_cast<std::size_t>(T) * L);
    for (auto& p : probs) p = rng.uniform();
    const auto set = locate_transitions(probs, L, T);
    const auto parts = segment_steps(Tensor::zeros({T, 2}), set);
    int total = 0;
    for (const auto& p : parts) {
      ASSERT_GE(p.size(0), 1);
      total += p.size(0);
    }
    ASSERT_EQ(total, T);
  }
}

TEST(Tap, ResampleStep) {
  const Tensor four = range_rows(4, 2)[0];
  EXPECT_TRUE(bit_equal(resample_step(four, 4), four));
  const Tensor c = Tensor::full({5, 3}, 2.5);
  for (int target : {1, 2, 3, 7, 16}) {
    const Tensor r = resample_step(c, target);
    for (double v : r.values()) EXPECT_DOUBLE_EQ(v, 2.5);
  }
  const Tensor two({2, 1}, {0.0, 1.0});
  const Tensor r = resample_step(two, 3);
  EXPECT_EQ(r.shape(), (Shape{3, 1}));
  EXPECT_NEAR(r.values()[0], 0.0, 1e-15);
  EXPECT_NEAR(r.values()[1], 0.5, 1e-15);
  EXPECT_NEAR(r.values()[2], 1.0, 1e-15);

  Rng rng(12);
  for (int it = 0; it < 200; ++it) {
    const int n = 1 + static_cast<int>(rng.below(20)), target = 1 + static_cast<int>(rng.below(20));
    const Tensor x = random_tensor({n, 1}, rng, false);
    const auto xv = x.values();
    const double lo = *std::min_element(xv.begin(), xv.end()), hi = *std::max_element(xv.begin(), xv.end());
    const Tensor r = resample_step(x, target);
    for (double v : r.values()) {
      ASSERT_GE(v, lo - 1e-12);
      ASSERT_LE(v, hi + 1e-12);
    }
  }
}

TEST(Tap, InvalidTransitionSets) {
  EXPECT_THROW(TransitionSet({5, 5}, 10), DataError);
  EXPECT_THROW(TransitionSet({0, 5}, 10), DataError);
  EXPECT_THROW(TransitionSet({5, 10}, 10), DataError);
  const auto iv = TransitionSet({3, 7}, 10).intervals();
  EXPECT_EQ(iv, (std::vector<std::pair<int, int>>{{0, 3}, {3, 7}, {7, 10}}));
}

// ---------------------------------------------------------------------------
// Static encoder

TEST(Sve, PerFrameFeatures) {
  ParameterStore store;
  Rng rng(13);
  StaticEncoder enc(SveConfig{}, 32, 32, 3, store, rng);
  SyntheticConfig sc;
  sc.count = 1;
  VideoSample s = generate_synthetic(sc)[0];
  const std::size_t fv = s.frame_size() * 3;
  std::copy(s.frames.begin() + 10 * fv, s.frames.begin() + 11 * fv, s.frames.begin() + 50 * fv);
  NoGradGuard g;
  const Tensor f = enc.encode_frames(frame_tensor(s));
  EXPECT_EQ(f.shape(), (Shape{96, 16}));
  EXPECT_TRUE(bit_equal(slice(f, 0, 10, 11), slice(f, 0, 50, 51)));
  EXPECT_FALSE(bit_equal(slice(f, 0, 10, 11), slice(f, 0, 11, 12)));
  EXPECT_TRUE(bit_equal(f, enc.encode_frames(frame_tensor(s))));
}

TEST(Sve, FrameStrideHoldsFeatures) {
  ParameterStore store;
  Rng rng(14);
  SveConfig c;
  c.frame_stride = 2;
  StaticEncoder enc(c, 16, 16, 2, store, rng);
  NoGradGuard g;
  const Tensor f = enc.encode_frames(random_tensor({7, 3, 1, 16, 16}, rng, false));
  EXPECT_EQ(f.shape(), (Shape{7, 16}));
  EXPECT_TRUE(bit_equal(slice(f, 0, 2, 3), slice(f, 0, 3, 4)));
}

TEST(Sve, SplitAgreesWithSegmentSteps) {
  const Tensor f = range_rows(96, 4)[0];
  const TransitionSet ts({32, 64}, 96);
  const auto a = split_by_transitions(f, ts), b = segment_steps(f, ts);
  ASSERT_EQ(a.size(), 3u);
  for (int l = 0; l < 3; ++l) {
    EXPECT_EQ(a[l].size(0), 32);
    EXPECT_TRUE(bit_equal(a[l], b[l]));
  }
  EXPECT_TRUE(bit_equal(concat(a, 0), f));
  Rng rng(15);
  for (int it = 0; it < 300; ++it) {
    const int T = 3 + static_cast<int>(rng.below(50));
    std::vector<double> probs(static_cast<std::size_t>(T) * 2);
    for (auto& p : probs) p = rng.uniform();
    const auto set = locate_transitions(probs, 2, T);
    const Tensor x = random_tensor({T, 2}, rng, false);
    const auto s1 = split_by_transitions(x, set), s2 = segment_steps(x, set);
    for (int l = 0; l < 3; ++l) ASSERT_TRUE(bit_equal(s1[l], s2[l]));
  }
}

TEST(Sve, ProjectStep) {
  ParameterStore store;
  Rng rng(16);
  StaticEncoder enc(SveConfig{}, 32, 32, 3, store, rng);
  const Tensor seg = random_tensor({4, 16}, rng, false);
  const auto* w = store.find("sve.project2.weight");
  const auto* b = store.find("sve.project2.bias");
  ASSERT_NE(w, nullptr);
  EXPECT_TRUE(bit_equal(enc.project_step(seg, 1), linear(seg, w->tensor, b->tensor)));
  EXPECT_EQ(enc.project_step(random_tensor({19, 16}, rng, false), 0).shape(), (Shape{4, 16}));
  EXPECT_NE(store.checksum("sve.project1"), store.checksum("sve.project2"));
  EXPECT_NE(store.checksum("sve.project2"), store.checksum("sve.project3"));
}

// ---------------------------------------------------------------------------
// Regression

TEST(FineReg, CrossAttentionContract) {
  ParameterStore store;
  Rng rng(17);
  CrossAttention att(16, 4, 32, store, "att", rng);
  const Tensor q = random_tensor({8, 16}, rng, false), e = random_tensor({8, 16}, rng, false);
  std::vector<Tensor> weights;
  const Tensor d = att(q, q, &weights);
  EXPECT_EQ(d.shape(), q.shape());
  for (double v : d.values()) ASSERT_TRUE(std::isfinite(v));
  ASSERT_EQ(weights.size(), 4u);
  att(q, random_tensor({5, 16}, rng, false), &weights);
  for (const auto& w : weights) {
    ASSERT_EQ(w.shape(), (Shape{8, 5}));
    for (int r = 0; r < 8; ++r) {
      double s = 0;
      for (int c = 0; c < 5; ++c) s += w.values()[r * 5 + c];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
  EXPECT_THROW(att(q, random_tensor({8, 12}, rng, false)), ShapeError);
}

TEST(FineReg, LengthMismatchNamesStep) {
  ModelConfig mc;
  FineParserModel m(mc);
  Rng rng(18);
  std::vector<Tensor> a, b;
  for (int l = 0; l < 3; ++l) {
    a.push_back(random_tensor({8, 16}, rng, false));
    b.push_back(random_tensor({l == 1 ? 6 : 8, 16}, rng, false));
  }
  try {
    m.regressor().relative(a, b, a, a);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos) << e.what();
  }
}

TEST(FineReg, HeadStructureAndAffineAtZero) {
  ParameterStore store;
  Rng rng(19);
  RegressionHead head(16, 32, 16, store, "h", rng);
  ASSERT_EQ(head.affine_layers().size(), 3u);
  EXPECT_EQ(head.relu_count(), 2);
  EXPECT_EQ(head.affine_layers()[0].weight.shape(), (Shape{32, 16}));
  EXPECT_EQ(head.affine_layers()[2].weight.shape(), (Shape{1, 16}));
  auto& last = const_cast<LinearLayer&>(head.affine_layers()[2]);
  std::fill(last.weight.values_mut().begin(), last.weight.values_mut().end(), 0.0);
  last.bias.values_mut()[0] = 0.7;
  EXPECT_DOUBLE_EQ(head(Tensor::zeros({1, 16})).item(), 0.7);
}

TEST(FineReg, HeadGradientMatchesFiniteDifferences) {
  ParameterStore store;
  Rng rng(20);
  RegressionHead head(6, 8, 5, store, "h", rng);
  Tensor x = random_tensor({1, 6}, rng);
  std::vector<Tensor> leaves = {x};
  for (const auto& p : store.all()) leaves.push_back(p.tensor);
  EXPECT_LT(gradient_error([&] { return reshape(head(x), {}); }, leaves, 1e-6), 1e-4);
}

TEST(FineReg, AssembleScore) {
  const std::vector<double> lambda = {3, 5, 2};
  EXPECT_DOUBLE_EQ(assemble_score({{0, 0}, {0, 0}, {0, 0}}, lambda, 70.0), 70.0);
  EXPECT_DOUBLE_EQ(assemble_score({{1, 0}, {0, 1}, {1, 1}}, lambda, 70.0), 82.0);
  const std::vector<std::pair<double, double>> rel = {{0.3, -0.1}, {0.25, 0.5}, {-1.0, 0.2}};
  const std::vector<double> doubled = {6, 10, 4};
  EXPECT_NEAR(assemble_score(rel, doubled, 5.0) - 5.0, 2.0 * (assemble_score(rel, lambda, 5.0) - 5.0), 1e-12);
  EXPECT_THROW(assemble_score({{0, 0}}, lambda, 1.0), ShapeError);

  const std::vector<StepRelative> zeros(3, StepRelative{Tensor::zeros({1, 1}), Tensor::zeros({1, 1})});
  EXPECT_EQ(assemble_score(zeros, lambda, 70.25).item(), 70.25);
}

TEST(FineReg, LambdaLengthValidated) {
  ModelConfig c;
  c.finereg.lambda = {1, 2};
  EXPECT_THROW(c.validate(), ConfigError);
  c.finereg.lambda = {1, 0, 2};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(FineReg, MultiExemplarVoting) {
  FineParserModel m(ModelConfig{});
  SyntheticConfig sc;
  sc.count = 10;
  const auto ds = generate_synthetic(sc);
  NoGradGuard g;
  const auto q = m.represent(ds[0]);
  std::vector<VideoRepresentation> reps;
  for (int i : {3, 6, 9}) reps.push_back(m.represent(ds[i]));
  const double single = m.score_pair(q, reps[0], ds[3].score).score.item();

  const std::vector<ExemplarRef> one = {{&reps[0], ds[3].score}};
  EXPECT_EQ(m.predict_multi_exemplar(q, one).score, single);
  const std::vector<ExemplarRef> copies(5, ExemplarRef{&reps[0], ds[3].score});
  EXPECT_EQ(m.predict_multi_exemplar(q, copies).score, single);

  const std::vector<ExemplarRef> three = {{&reps[0], ds[3].score}, {&reps[1], ds[6].score}, {&reps[2], ds[9].score}};
  const double manual = (m.score_pair(q, reps[0], ds[3].score).score.item() +
                         m.score_pair(q, reps[1], ds[6].score).score.item() +
                         m.score_pair(q, reps[2], ds[9].score).score.item()) /
                        3.0;
  EXPECT_NEAR(m.predict_multi_exemplar(q, three).score, manual, 1e-12);
  EXPECT_THROW(m.predict_multi_exemplar(q, {}), DataError);
}

// ---------------------------------------------------------------------------
// Model configuration

TEST(ModelConfig, JsonRoundTripAndHash) {
  ModelConfig c;
  c.sve.duration = 8;
  c.use_gate = false;
  c.finereg.lambda = {1, 2, 3};
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.hash(), c.hash());
  EXPECT_NE(ModelConfig{}.hash(), c.hash());
}

TEST(ModelConfig, StructuralValidation) {
  ModelConfig c;
  c.num_frames = 90;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.finereg.width = 8;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.sve.projection_dim = 12;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.sap.fuse_kernel = 2;
  EXPECT_THROW(c.validate(), ConfigError);
}
