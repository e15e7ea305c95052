#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "xflood/cctfrm.hpp"
#include "xflood/config.hpp"
#include "xflood/errors.hpp"

using namespace xflood;
using oracle::Vec;
using testutil::Bench;
using testutil::max_abs_diff;
using testutil::random_tensor;
using testutil::vec;

namespace {

Vec sample(const Tensor& t, std::size_t b) {
  const std::size_t per = t.size() / t.shape()[0];
  return Vec(t.data().begin() + static_cast<std::ptrdiff_t>(b * per),
             t.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * per));
}

oracle::TransformerLayer layer_params(const Bench& t, const std::string& p) {
  return {t.p(p + ".attn.q"),       t.p(p + ".attn.k"),     t.p(p + ".attn.v"),
          t.p(p + ".attn.o"),       t.p(p + ".ffn.0.weight"), t.p(p + ".ffn.0.bias"),
          t.p(p + ".ffn.1.weight"), t.p(p + ".ffn.1.bias")};
}

}  // namespace

TEST(GatedBlock, ZeroKernelLeavesOnlyShift) {
  Bench t(Mode::kTrain);
  register_gated_block(t.params, "g", 2, 3);
  t.params.set("g.kernel", Tensor({3, 3, 2, 3}));
  t.params.set("g.bn.beta", Tensor(Shape{3}, Vec{0.5, -1.0, 2.0}));
  const Tensor out = gated_block(t.ctx(), t.in(random_tensor({2, 4, 4, 2}, t.rng)), "g", 0.0, false).value();
  ASSERT_EQ(out.shape(), Shape({2, 2, 2, 3}));
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], (Vec{0.5, -1.0, 2.0}[i % 3]));
}

TEST(GatedBlock, MatchesScriptedOracle) {
  for (bool up : {false, true}) {
    const std::size_t N = 2, H = 4, W = 4, Cin = 2, Cout = 3;
    Bench t(Mode::kTrain);
    register_gated_block(t.params, "g", Cin, Cout);
    testutil::randomize(t.params, t.rng, -1.0, 1.0);
    const Tensor x = random_tensor({N, H, W, Cin}, t.rng);
    Var tap;
    const Tensor out = gated_block(t.ctx(), t.in(x), "g", 0.0, up, &tap).value();
    const std::size_t s = up ? 1 : 2;
    ASSERT_EQ(out.shape(), Shape({N, H * 2 / (2 * s), W * 2 / (2 * s), Cout}));
    const Vec expected = oracle::gated_block_train(vec(x), N, H, W, Cin, t.p("g.kernel"), Cout, t.p("g.bn.gamma"),
                                                   t.p("g.bn.beta"), up);
    EXPECT_LT(max_abs_diff(vec(out), expected), 1e-10) << "upsample " << up;
    for (double v : tap.value().data()) EXPECT_GE(v, 0.0);
  }
}

TEST(GatedBlock, EvalModeIgnoresDropout) {
  Bench t(Mode::kEval);
  register_gated_block(t.params, "g", 2, 2);
  const Tensor x = random_tensor({1, 4, 4, 2}, t.rng);
  EXPECT_EQ(vec(gated_block(t.ctx(), t.in(x), "g", 0.9, false).value()),
            vec(gated_block(t.ctx(), t.in(x), "g", 0.0, false).value()));
}

TEST(Encoder, FullWidthPlanShape) {
  Bench t;
  const std::vector<std::size_t> plan{64, 128, 256, 512};
  register_encoder(t.params, "e", 3, plan);
  const Tensor out = encoder(t.ctx(), t.in(random_tensor({1, 64, 64, 3}, t.rng, 0.0, 1.0)), "e", 4, 0.2).value();
  EXPECT_EQ(out.shape(), Shape({1, 4, 4, 512}));
}

TEST(Encoder, SingleBlockShapeAndTaps) {
  Bench t;
  register_encoder(t.params, "e", 3, {8});
  std::vector<Var> taps;
  const Tensor out = encoder(t.ctx(), t.in(random_tensor({2, 4, 4, 3}, t.rng)), "e", 1, 0.2, &taps).value();
  EXPECT_EQ(out.shape(), Shape({2, 2, 2, 8}));
  ASSERT_EQ(taps.size(), 1u);
  EXPECT_EQ(taps[0].shape(), Shape({2, 4, 4, 8}));
}

TEST(Encoder, RejectsIndivisibleExtents) {
  Bench t;
  register_encoder(t.params, "e", 3, {4, 4});
  EXPECT_THROW(encoder(t.ctx(), t.in(Tensor({1, 6, 8, 3})), "e", 2, 0.0), ConfigError);
}

TEST(Transformer, ZeroWeightsReturnPositions) {
  const std::size_t n = 5, d = 8;
  Bench t;
  register_transformer(t.params, "tf", d, 2);
  for (const std::string& name : t.params.trainable_names()) t.params.set(name, Tensor(t.params.value(name).shape()));
  const Vec out = vec(transformer_encoder(t.ctx(), t.in(Tensor({1, n, d})), "tf", 2, 2).value());
  EXPECT_LT(max_abs_diff(out, oracle::positions(n, d)), 1e-15);
}

TEST(Transformer, DepthOneMatchesLayerOracle) {
  const std::size_t B = 2, n = 2, d = 8, heads = 2;
  Bench t;
  register_transformer(t.params, "tf", d, 1);
  testutil::randomize(t.params, t.rng);
  const Tensor x = random_tensor({B, n, d}, t.rng);
  const Tensor out = transformer_encoder(t.ctx(), t.in(x), "tf", 1, heads).value();
  const Vec pe = oracle::positions(n, d);
  for (std::size_t b = 0; b < B; ++b) {
    Vec in = sample(x, b);
    for (std::size_t i = 0; i < in.size(); ++i) in[i] += pe[i];
    EXPECT_LT(max_abs_diff(sample(out, b), oracle::transformer_layer(in, n, d, heads, layer_params(t, "tf.0"))), 1e-9);
  }
}

TEST(Transformer, DepthThreeChainsLayers) {
  const std::size_t n = 4, d = 8, heads = 4;
  Bench t;
  register_transformer(t.params, "tf", d, 3);
  testutil::randomize(t.params, t.rng);
  const Tensor x = random_tensor({1, n, d}, t.rng);
  Vec h = vec(x);
  const Vec pe = oracle::positions(n, d);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += pe[i];
  for (int l = 0; l < 3; ++l) h = oracle::transformer_layer(h, n, d, heads, layer_params(t, "tf." + std::to_string(l)));
  EXPECT_LT(max_abs_diff(vec(transformer_encoder(t.ctx(), t.in(x), "tf", 3, heads).value()), h), 1e-9);
}

TEST(Transformer, RejectsHeadsNotDividingWidth) {
  Bench t;
  register_transformer(t.params, "tf", 6, 1);
  EXPECT_THROW(transformer_encoder(t.ctx(), t.in(Tensor({1, 2, 6})), "tf", 1, 4), ConfigError);
}

TEST(Decoder, SingleStageIsItsOwnCascade) {
  Bench t(Mode::kTrain);
  register_decoder(t.params, "d", 4, {6});
  std::vector<Var> stages;
  const Tensor out = decoder_cascade(t.ctx(), t.in(random_tensor({2, 2, 2, 4}, t.rng)), "d", 1, 0.0, &stages).value();
  ASSERT_EQ(stages.size(), 1u);
  EXPECT_EQ(vec(out), vec(stages[0].value()));
  EXPECT_EQ(out.shape(), Shape({2, 2, 2, 6}));
}

TEST(Decoder, FourStagesConcatenate120Channels) {
  Bench t;
  register_decoder(t.params, "d", 64, {64, 32, 16, 8});
  const Tensor out = decoder_cascade(t.ctx(), t.in(random_tensor({1, 4, 4, 64}, t.rng)), "d", 4, 0.2).value();
  EXPECT_EQ(out.shape(), Shape({1, 4, 4, 120}));
}

TEST(Decoder, MatchesManualStageChain) {
  const std::size_t N = 2, H = 2, W = 2;
  const std::vector<std::size_t> plan{4, 3, 2};
  Bench t(Mode::kTrain);
  register_decoder(t.params, "d", 5, plan);
  testutil::randomize(t.params, t.rng, -1.0, 1.0);
  const Tensor x = random_tensor({N, H, W, 5}, t.rng);
  const Vec out = vec(decoder_cascade(t.ctx(), t.in(x), "d", plan.size(), 0.0).value());

  std::vector<Vec> stages;
  Vec y = vec(x);
  std::size_t cin = 5;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::string p = "d." + std::to_string(i);
    y = oracle::gated_block_train(y, N, H, W, cin, t.p(p + ".kernel"), plan[i], t.p(p + ".bn.gamma"),
                                  t.p(p + ".bn.beta"), true);
    stages.push_back(y);
    cin = plan[i];
  }
  Vec expected;
  for (std::size_t cell = 0; cell < N * H * W; ++cell) {
    for (std::size_t i = 0; i < plan.size(); ++i) {
      expected.insert(expected.end(), stages[i].begin() + static_cast<std::ptrdiff_t>(cell * plan[i]),
                      stages[i].begin() + static_cast<std::ptrdiff_t>((cell + 1) * plan[i]));
    }
  }
  EXPECT_LT(max_abs_diff(out, expected), 1e-10);
}

TEST(Harmonizer, ZeroInputAlgebra) {
  Bench t;
  register_harmonizer(t.params, "h", 3);
  const Tensor out = harmonize(t.ctx(), t.in(Tensor({1, 2, 2, 3})), t.in(Tensor({1, 2, 2, 3})), "h").value();
  for (double v : out.data()) EXPECT_EQ(v, 0.5 * (1.0 * -0.5));
}

TEST(Harmonizer, SubtractionSwitchedOff) {
  Bench t;
  register_harmonizer(t.params, "h", 3);
  t.params.set("h.alpha_sub", Tensor(Shape{1}, 0.0));
  t.params.set("h.g_cascade", Tensor(Shape{1}, 0.7));
  t.params.set("h.g_image", Tensor(Shape{1}, -0.4));
  const Tensor y = random_tensor({1, 2, 2, 3}, t.rng);
  const Tensor x = random_tensor({1, 2, 2, 3}, t.rng);
  const Vec out = vec(harmonize(t.ctx(), t.in(y), t.in(x), "h").value());
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_DOUBLE_EQ(out[i], oracle::sigmoid(0.7 * y[i] - 0.4 * x[i]) * y[i]);
  }
}

TEST(Harmonizer, MatchesScriptedOracle) {
  Bench t;
  register_harmonizer(t.params, "h", 4);
  testutil::randomize(t.params, t.rng, -1.5, 1.5);
  const Tensor y = random_tensor({2, 3, 3, 4}, t.rng);
  const Tensor x = random_tensor({2, 3, 3, 4}, t.rng);
  const oracle::HarmonizerGains g{t.gain("h.beta"), t.gain("h.g_cascade"), t.gain("h.g_image"),
                                  t.gain("h.alpha_cascade"), t.gain("h.alpha_sub")};
  EXPECT_LT(max_abs_diff(vec(harmonize(t.ctx(), t.in(y), t.in(x), "h").value()), oracle::harmonize(vec(y), vec(x), g)),
            1e-10);
}

TEST(Harmonizer, FullPathShapeAndAdapterMismatch) {
  Bench t;
  register_harmonizer(t.params, "h", 6);
  const Tensor image = random_tensor({2, 16, 16, 3}, t.rng, 0.0, 1.0);
  const Tensor out =
      reverse_feature_harmonization(t.ctx(), t.in(random_tensor({2, 4, 4, 6}, t.rng)), t.in(image), "h").value();
  EXPECT_EQ(out.shape(), Shape({2, 4 * 4 * 6}));
  EXPECT_THROW(reverse_feature_harmonization(t.ctx(), t.in(Tensor({2, 4, 4, 5})), t.in(image), "h"), ConfigError);
  EXPECT_THROW(harmonize(t.ctx(), t.in(Tensor({1, 2, 2, 6})), t.in(Tensor({1, 2, 3, 6})), "h"), ConfigError);
}

TEST(CctfrmBranch, OutputLengthAndTaps) {
  ModelConfig c;
  Bench t;
  register_cctfrm(t.params, c);
  CctfrmTaps taps;
  const Tensor out =
      cctfrm_forward(t.ctx(), c, t.in(random_tensor({2, c.image_h, c.image_w, 3}, t.rng, 0.0, 1.0)), &taps).value();
  EXPECT_EQ(out.shape(), Shape({2, c.d_r()}));
  EXPECT_EQ(c.cascade_channels(), 120u);
  EXPECT_EQ(taps.encoder_activations.size(), c.encoder_plan.size());
  EXPECT_EQ(taps.bottleneck.shape(), Shape({2, 4, 4, 64}));
  EXPECT_EQ(taps.cascade.shape(), Shape({2, 4, 4, 120}));
  for (double v : out.data()) EXPECT_TRUE(std::isfinite(v));
}
