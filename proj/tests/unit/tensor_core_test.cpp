#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "xflood/errors.hpp"

using namespace xflood;
using testutil::max_abs_diff;
using testutil::max_rel_diff;
using testutil::random_tensor;
using testutil::vec;

namespace {

Tensor make(Shape s, std::vector<double> v) { return Tensor(std::move(s), std::move(v)); }

}  // namespace

TEST(Shape, RejectsZeroExtentsAndExcessRank) {
  EXPECT_THROW(Shape({2, 0}), DimensionError);
  EXPECT_THROW(Shape({1, 1, 1, 1, 1}), DimensionError);
  EXPECT_EQ(Shape({2, 3, 4}).numel(), 24u);
}

TEST(Matmul, IdentityAndHandValues) {
  Graph g;
  Var id = g.constant(make({2, 2}, {1, 0, 0, 1}));
  Var a = g.constant(make({2, 2}, {1, 2, 3, 4}));
  Var b = g.constant(make({2, 2}, {5, 6, 7, 8}));
  EXPECT_EQ(vec(matmul(id, a).value()), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(vec(matmul(a, b).value()), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Matmul, MatchesTripleLoop) {
  Rng rng(3);
  Graph g;
  Tensor a = random_tensor({5, 7}, rng);
  Tensor b = random_tensor({7, 3}, rng);
  const auto got = vec(matmul(g.constant(a), g.constant(b)).value());
  EXPECT_LE(max_rel_diff(got, oracle::matmul(vec(a), vec(b), 5, 7, 3)), 1e-12);
}

TEST(Matmul, MismatchNamesBothShapes) {
  Graph g;
  try {
    matmul(g.constant(Tensor({2, 3})), g.constant(Tensor({4, 2})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
  }
}

TEST(Broadcast, RightAlignedAndErrors) {
  Graph g;
  Var a = g.constant(make({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var b = g.constant(make({3}, {10, 20, 30}));
  EXPECT_EQ(vec(add(a, b).value()), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  Var col = g.constant(make({2, 1}, {2, 3}));
  EXPECT_EQ(vec(mul(a, col).value()), (std::vector<double>{2, 4, 6, 12, 15, 18}));
  EXPECT_THROW(add(a, g.constant(Tensor({2}))), DimensionError);
}

TEST(Conv2d, ZeroKernelGivesZero) {
  Rng rng(1);
  Graph g;
  Var y = conv2d(g.constant(random_tensor({5, 5, 3}, rng)), g.constant(Tensor({3, 3, 3, 2})));
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, IdentityMixingKernelIsIdentity) {
  Rng rng(2);
  Graph g;
  Tensor x = random_tensor({4, 5, 3}, rng);
  Tensor k({1, 1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) k[c * 3 + c] = 1.0;
  EXPECT_EQ(vec(conv2d(g.constant(x), g.constant(k)).value()), vec(x));
}

TEST(Conv2d, GroupedMatchesNestedLoops) {
  Rng rng(4);
  Graph g;
  Tensor x = random_tensor({6, 6, 4}, rng);
  Tensor k = random_tensor({3, 3, 2, 4}, rng);
  const auto got = vec(conv2d(g.constant(x), g.constant(k), 2).value());
  EXPECT_LE(max_abs_diff(got, oracle::conv2d(vec(x), 1, 6, 6, 4, vec(k), 3, 3, 4, 2)), 1e-12);
}

TEST(Conv2d, BatchedDepthwiseAndRectangular) {
  Rng rng(5);
  Graph g;
  Tensor x = random_tensor({2, 5, 7, 3}, rng);
  Tensor k = random_tensor({7, 7, 1, 3}, rng);
  auto got = vec(conv2d(g.constant(x), g.constant(k), 3).value());
  EXPECT_LE(max_abs_diff(got, oracle::conv2d(vec(x), 2, 5, 7, 3, vec(k), 7, 7, 3, 3)), 1e-12);

  Tensor k2 = random_tensor({5, 5, 3, 2}, rng);
  got = vec(conv2d(g.constant(x), g.constant(k2)).value());
  EXPECT_LE(max_abs_diff(got, oracle::conv2d(vec(x), 2, 5, 7, 3, vec(k2), 5, 5, 2)), 1e-12);
}

TEST(Conv2d, RejectsBadGroupsAndEvenKernel) {
  Graph g;
  Var x = g.constant(Tensor({4, 4, 4}));
  EXPECT_THROW(conv2d(x, g.constant(Tensor({3, 3, 2, 3})), 2), ConfigError);
  EXPECT_THROW(conv2d(x, g.constant(Tensor({2, 2, 4, 4}))), ConfigError);
  EXPECT_THROW(conv2d(x, g.constant(Tensor({3, 3, 3, 4}))), DimensionError);
}

TEST(Fft, ConstantImageIsDcOnly) {
  Graph g;
  const double c = 0.7;
  const auto m = vec(fft2d_magnitude(g.constant(Tensor({4, 4, 1}, c))).value());
  EXPECT_NEAR(m[0], 16 * c, 1e-12);
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_NEAR(m[i], 0.0, 1e-12);
}

TEST(Fft, ImpulseHasFlatSpectrum) {
  Graph g;
  Tensor x({4, 4, 1});
  x[0] = 1.0;
  for (double v : fft2d_magnitude(g.constant(x)).value().data()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Fft, MatchesQuadraticDft) {
  Rng rng(6);
  Graph g;
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{5, 7}, {8, 8}, {1, 6}, {3, 1}}) {
    Tensor x = random_tensor({h, w, 2}, rng);
    const auto got = vec(fft2d_magnitude(g.constant(x)).value());
    EXPECT_LE(max_abs_diff(got, oracle::dft_magnitude(vec(x), h, w, 2)), 1e-9) << h << "x" << w;
  }
}

TEST(Activations, HandValuesAndShiftInvariance) {
  Graph g;
  EXPECT_EQ(vec(softmax(g.constant(Tensor({2}))).value()), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(sigmoid(g.constant(Tensor({1}))).value()[0], 0.5);
  Rng rng(7);
  Tensor x = random_tensor({3, 6}, rng, -3, 3);
  Tensor shifted = x;
  for (double& v : shifted.data()) v += 100.0;
  EXPECT_LE(max_abs_diff(vec(softmax(g.constant(x)).value()), vec(softmax(g.constant(shifted)).value())), 1e-12);
  const auto rows = vec(softmax(g.constant(x)).value());
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_NEAR(std::accumulate(rows.begin() + r * 6, rows.begin() + (r + 1) * 6, 0.0), 1.0, 1e-12);
  }
}

TEST(LayerNorm, ZeroConstantAndRandom) {
  Graph g;
  for (double v : layer_norm(g.constant(Tensor({4}))).value().data()) EXPECT_EQ(v, 0.0);
  for (double v : layer_norm(g.constant(Tensor({4}, 1.0))).value().data()) EXPECT_EQ(v, 0.0);
  Rng rng(8);
  Tensor x = random_tensor({64}, rng, -4, 4);
  const auto y = vec(layer_norm(g.constant(x)).value());
  double mean = std::accumulate(y.begin(), y.end(), 0.0) / 64.0;
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= 64.0;
  EXPECT_LT(std::abs(mean), 1e-10);
  EXPECT_NEAR(var, 1.0, 1e-3);
  EXPECT_LE(max_abs_diff(y, oracle::layer_norm_rows(vec(x), 1, 64)), 1e-12);
}

TEST(BatchNorm, ConstantChannelAndFixedPoint) {
  Graph g;
  Tensor rm({2}, 0.0), rv({2}, 1.0);
  BatchNormState st{&rm, &rv, 0.9, false};
  Var ones = g.constant(Tensor({2}, 1.0));
  Var zeros = g.constant(Tensor({2}, 0.0));
  Var y = batch_norm(g.constant(Tensor({3, 3, 2}, 4.0)), ones, zeros, Mode::kTrain, st);
  for (double v : y.value().data()) EXPECT_EQ(v, 0.0);

  // Already standardized per channel: (-1, 1) pairs.
  Tensor x = make({2, 2, 2}, {-1, 1, 1, -1, -1, 1, 1, -1});
  y = batch_norm(g.constant(x), ones, zeros, Mode::kTrain, st);
  EXPECT_LE(max_abs_diff(vec(y.value()), vec(x)), 1e-5);
}

TEST(BatchNorm, TrainStatisticsAndRunningUpdate) {
  Rng rng(9);
  Graph g;
  Tensor x = random_tensor({3, 4, 5, 3}, rng, -2, 2);
  Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
  Tensor beta = random_tensor({3}, rng);
  Tensor rm({3}, 0.0), rv({3}, 1.0);
  Var y = batch_norm(g.constant(x), g.constant(gamma), g.constant(beta), Mode::kTrain, {&rm, &rv, 0.9, true});
  EXPECT_LE(max_abs_diff(vec(y.value()), oracle::batch_norm_train(vec(x), 60, 3, vec(gamma), vec(beta))), 1e-12);

  // Per-channel output statistics are (beta, gamma^2 * var / (var + eps)).
  const auto yv = vec(y.value());
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, xm = 0.0;
    for (std::size_t i = 0; i < 60; ++i) {
      m += yv[i * 3 + c];
      xm += x[i * 3 + c];
    }
    m /= 60.0;
    xm /= 60.0;
    double v = 0.0, xv = 0.0;
    for (std::size_t i = 0; i < 60; ++i) {
      v += (yv[i * 3 + c] - m) * (yv[i * 3 + c] - m);
      xv += (x[i * 3 + c] - xm) * (x[i * 3 + c] - xm);
    }
    v /= 60.0;
    xv /= 60.0;
    EXPECT_NEAR(m, beta[c], 1e-6);
    EXPECT_NEAR(v, gamma[c] * gamma[c] * xv / (xv + 1e-5), 1e-6);
    EXPECT_NEAR(rm[c], 0.1 * xm, 1e-12);
    EXPECT_NEAR(rv[c], 0.9 + 0.1 * xv, 1e-12);
  }
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  Rng rng(10);
  Graph g;
  Tensor x = random_tensor({2, 3, 3, 2}, rng);
  Tensor rm = make({2}, {0.2, -0.1}), rv = make({2}, {1.5, 0.7});
  Tensor gamma = make({2}, {1.2, 0.8}), beta = make({2}, {0.1, -0.3});
  Var y = batch_norm(g.constant(x), g.constant(gamma), g.constant(beta), Mode::kEval, {&rm, &rv, 0.9, true});
  EXPECT_LE(max_abs_diff(vec(y.value()),
                         oracle::batch_norm_eval(vec(x), 18, 2, vec(gamma), vec(beta), vec(rm), vec(rv))),
            1e-12);
  EXPECT_EQ(rm[0], 0.2);  // untouched in eval mode
}

TEST(Pooling, GapAndMaxPool) {
  Graph g;
  const auto gap = vec(global_avg_pool(g.constant(Tensor({3, 5, 2}, 1.25))).value());
  EXPECT_EQ(gap, (std::vector<double>{1.25, 1.25}));
  EXPECT_EQ(max_pool2(g.constant(make({2, 2, 1}, {1, 2, 3, 4}))).value()[0], 4.0);

  Rng rng(11);
  Tensor x = random_tensor({8, 8, 3}, rng);
  EXPECT_EQ(vec(max_pool2(g.constant(x)).value()), oracle::max_pool2(vec(x), 1, 8, 8, 3));
  Tensor odd = random_tensor({2, 5, 7, 2}, rng);
  Var pooled = max_pool2(g.constant(odd));
  EXPECT_EQ(pooled.shape(), Shape({2, 3, 4, 2}));
  EXPECT_EQ(vec(pooled.value()), oracle::max_pool2(vec(odd), 2, 5, 7, 2));
}

TEST(Upsample, ReplicationGradientAndRoundTrip) {
  Graph g;
  const auto up = vec(upsample_nearest2(g.constant(Tensor({1, 1, 1}, 3.5))).value());
  EXPECT_EQ(up, (std::vector<double>(4, 3.5)));

  Rng rng(12);
  Tensor x = random_tensor({2, 3, 4, 2}, rng);
  Var xv = g.variable(x);
  Var y = upsample_nearest2(xv);
  g.backward(sum(y));
  for (double v : g.grad(xv).data()) EXPECT_EQ(v, 4.0);

  // 2x2 average of the upsampled map recovers the input exactly.
  const auto yv = vec(y.value());
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t c = 0; c < 2; ++c) {
          double s = 0.0;
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) s += yv[((n * 6 + 2 * i + dy) * 8 + 2 * j + dx) * 2 + c];
          EXPECT_EQ(s / 4.0, x[((n * 3 + i) * 4 + j) * 2 + c]);
        }
}

TEST(ResizeNearest, PicksFloorCentredSources) {
  Graph g;
  Tensor x({6, 1, 1});
  for (std::size_t i = 0; i < 6; ++i) x[i] = static_cast<double>(i);
  // out 4 from in 6: floor((i + 0.5) * 1.5) = 0, 2, 3, 5
  EXPECT_EQ(vec(resize_nearest(g.constant(x), 4, 1).value()), (std::vector<double>{0, 2, 3, 5}));
}

TEST(Dropout, EvalIdentityAndTrainScaling) {
  Rng rng(13);
  Graph g;
  Tensor x = random_tensor({50, 40}, rng, 1, 2);
  Var xv = g.constant(x);
  EXPECT_EQ(vec(dropout(xv, 0.2, Mode::kEval, rng).value()), vec(x));
  const auto y = vec(dropout(xv, 0.2, Mode::kTrain, rng).value());
  std::size_t kept = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0) {
      ++kept;
      EXPECT_NEAR(y[i], x[i] / 0.8, 1e-12);
    }
  }
  EXPECT_NEAR(static_cast<double>(kept) / 2000.0, 0.8, 0.05);
}

TEST(Bce, HandValuesAndPerSampleOracle) {
  Graph g;
  const int one[] = {1};
  EXPECT_NEAR(bce_loss(g.constant(Tensor({1}, 1.0)), one).value()[0], -std::log(1 - 1e-7), 1e-15);
  const int labels2[] = {0, 1};
  EXPECT_NEAR(bce_loss(g.constant(Tensor({2}, 0.5)), labels2).value()[0], std::log(2.0), 1e-12);

  Rng rng(14);
  Tensor p = random_tensor({9, 1}, rng, 0.01, 0.99);
  std::vector<int> labels(9);
  for (int& l : labels) l = static_cast<int>(rng.below(2));
  EXPECT_NEAR(bce_loss(g.constant(p), labels).value()[0], oracle::bce(vec(p), labels), 1e-12);
  EXPECT_THROW(bce_loss(g.constant(p), std::vector<int>(3, 0)), DimensionError);
}

TEST(Bce, ClippedProbabilitiesHaveZeroGradient) {
  Graph g;
  Var p = g.variable(make({2}, {1.0, 0.3}));
  const int labels[] = {1, 1};
  g.backward(bce_loss(p, labels));
  EXPECT_EQ(g.grad(p)[0], 0.0);
  EXPECT_NEAR(g.grad(p)[1], -1.0 / (2 * 0.3), 1e-12);
}

TEST(ShapeOps, PermuteBatchedMatmulConcatSlice) {
  Rng rng(15);
  Graph g;
  Tensor x = random_tensor({2, 3, 4}, rng);
  const auto p = vec(permute(g.constant(x), {2, 0, 1}).value());
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(p[(c * 2 + a) * 3 + b], x[(a * 3 + b) * 4 + c]);

  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({2, 4, 5}, rng);
  const auto bm = vec(batched_matmul(g.constant(a), g.constant(b)).value());
  for (std::size_t i = 0; i < 2; ++i) {
    const oracle::Vec ai(a.data().begin() + i * 12, a.data().begin() + (i + 1) * 12);
    const oracle::Vec bi(b.data().begin() + i * 20, b.data().begin() + (i + 1) * 20);
    const oracle::Vec want = oracle::matmul(ai, bi, 3, 4, 5);
    for (std::size_t j = 0; j < 15; ++j) EXPECT_NEAR(bm[i * 15 + j], want[j], 1e-12);
  }

  Var parts[] = {g.constant(make({1, 2}, {1, 2})), g.constant(make({1, 1}, {3}))};
  EXPECT_EQ(vec(concat(parts, 1).value()), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(vec(slice(g.constant(make({1, 4}, {1, 2, 3, 4})), 1, 1, 2).value()), (std::vector<double>{2, 3}));
}
