#include <gtest/gtest.h>

#include "test_util.hpp"
#include "xflood/adamw.hpp"
#include "xflood/config.hpp"
#include "xflood/errors.hpp"
#include "xflood/gradcheck.hpp"

using namespace xflood;
using testutil::random_tensor;
using testutil::vec;

namespace {

// Square with a deliberately wrong backward rule (x instead of 2x).
Var broken_square(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= v;
  Var inputs[] = {x};
  return x.graph().record("broken_square", inputs, std::move(out),
                          [](const Graph& g, const Node& n, std::span<Tensor* const> gin) {
                            const Tensor& xv = g.node(n.inputs[0]).value;
                            for (std::size_t i = 0; i < xv.size(); ++i) (*gin[0])[i] += n.grad[i] * xv[i];
                          });
}

}  // namespace

TEST(Autodiff, LinearAndQuadraticLosses) {
  Rng rng(1);
  ParamStore store;
  store.put("w", random_tensor({3, 4}, rng), true);
  {
    Graph g;
    g.backward(sum(g.param(store, "w")), &store);
    for (double v : store.grad("w").data()) EXPECT_EQ(v, 1.0);
  }
  store.zero_grad();
  {
    Graph g;
    Var w = g.param(store, "w");
    g.backward(scale(sum(mul(w, w)), 0.5), &store);
    EXPECT_EQ(vec(store.grad("w")), vec(store.value("w")));
  }
}

TEST(Autodiff, SharedNodesAccumulate) {
  Graph g;
  Var x = g.variable(Tensor({2}, 3.0));
  Var y = add(mul(x, x), x);  // d/dx = 2x + 1
  g.backward(sum(y));
  EXPECT_EQ(vec(g.grad(x)), (std::vector<double>{7.0, 7.0}));
}

TEST(Autodiff, ParamNodesAreSharedPerName) {
  ParamStore store;
  store.put("w", Tensor({1}, 2.0), true);
  Graph g;
  Var a = g.param(store, "w");
  Var b = g.param(store, "w");
  EXPECT_EQ(a.id(), b.id());
  g.backward(mul(a, b), &store);
  EXPECT_EQ(store.grad("w")[0], 4.0);
}

TEST(Autodiff, BuffersReceiveNoGradient) {
  ParamStore store;
  store.put("w", Tensor({2}, 1.0), true);
  store.add_buffer("bn.running_mean", Tensor({2}, 0.5));
  Graph g;
  g.backward(sum(mul(g.param(store, "w"), g.param(store, "bn.running_mean"))), &store);
  EXPECT_EQ(vec(store.grad("w")), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(vec(store.grad("bn.running_mean")), (std::vector<double>{0.0, 0.0}));
}

TEST(Autodiff, BackwardRejectsNonScalarWithoutSeed) {
  Graph g;
  Var x = g.variable(Tensor({3}, 1.0));
  EXPECT_THROW(g.backward(x), ContractError);
  EXPECT_THROW(g.backward(x, Tensor({2}, 1.0)), DimensionError);
}

TEST(Gradcheck, TensorCoreSuitePasses) {
  for (const GradcheckReport& r : run_gradcheck_suite(ModelConfig{}, "tensor_core")) {
    EXPECT_TRUE(r.passed) << r.name << " " << r.max_rel_error << " " << r.worst_coordinate;
    EXPECT_LT(r.max_rel_error, 1e-6) << r.name;
  }
}

TEST(Gradcheck, NegativeControlFails) {
  Rng rng(2);
  ParamStore store;
  store.put("x", random_tensor({5, 5}, rng, 0.5, 1.5), true);
  const GradcheckReport bad =
      gradcheck("broken_square", store, [](Graph& g, ParamStore& p) { return broken_square(g.param(p, "x")); });
  EXPECT_FALSE(bad.passed);
  EXPECT_GT(bad.max_rel_error, 0.1);
  EXPECT_GE(bad.coordinates, 20u);

  const GradcheckReport good =
      gradcheck("square", store, [](Graph& g, ParamStore& p) { return mul(g.param(p, "x"), g.param(p, "x")); });
  EXPECT_TRUE(good.passed) << good.max_rel_error;
}

TEST(Gradcheck, UnknownSelectorIsConfigError) {
  EXPECT_THROW(run_gradcheck_suite(ModelConfig{}, "nope"), ConfigError);
}

TEST(AdamW, DecayOnlyStep) {
  ParamStore store;
  store.put("w", Tensor({3}, 2.0), true);
  AdamWConfig cfg;
  adamw_step(store, cfg);
  for (double v : store.value("w").data()) EXPECT_DOUBLE_EQ(v, 2.0 * (1.0 - cfg.learning_rate * cfg.weight_decay));
}

TEST(AdamW, BiasCorrectedFirstStep) {
  ParamStore store;
  store.put("w", Tensor({1}, 0.0), true);
  store.entry("w").grad = Tensor({1}, 1.0);
  AdamWConfig cfg;
  adamw_step(store, cfg);
  EXPECT_NEAR(store.value("w")[0], -cfg.learning_rate / (1.0 + cfg.epsilon), 1e-18);
  EXPECT_EQ(store.grad("w")[0], 0.0);  // gradients are cleared after the step
}

TEST(AdamW, TrajectoryMatchesReference) {
  // Scalar quadratic f(w) = (w - 3)^2 / 2 plus a 2-vector with a different curvature.
  AdamWConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.weight_decay = 0.01;
  ParamStore store;
  store.put("w", Tensor(Shape{3}, std::vector<double>{0.5, -1.0, 2.0}), true);
  oracle::AdamW ref(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, cfg.weight_decay);
  oracle::Vec theta = vec(store.value("w"));
  const double curvature[] = {1.0, 4.0, 0.25};
  for (int step = 0; step < 10; ++step) {
    oracle::Vec grad(3);
    for (std::size_t i = 0; i < 3; ++i) grad[i] = curvature[i] * (theta[i] - 3.0);
    store.entry("w").grad = Tensor(Shape{3}, grad);
    adamw_step(store, cfg);
    ref.step(theta, grad);
    for (std::size_t i = 0; i < 3; ++i) ASSERT_NEAR(store.value("w")[i], theta[i], 1e-10) << "step " << step;
  }
}

TEST(AdamW, SkipsBuffersAndValidates) {
  ParamStore store;
  store.add_buffer("bn.running_var", Tensor({2}, 1.0));
  store.entry("bn.running_var").grad = Tensor({2}, 5.0);
  adamw_step(store, AdamWConfig{});
  EXPECT_EQ(vec(store.value("bn.running_var")), (std::vector<double>{1.0, 1.0}));

  AdamWConfig bad;
  bad.beta1 = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = AdamWConfig{};
  bad.epsilon = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}
