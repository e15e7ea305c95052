#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "xflood/cctfrm.hpp"
#include "xflood/errors.hpp"
#include "xflood/gradcheck.hpp"
#include "xflood/hcamam.hpp"
#include "xflood/layers.hpp"
#include "xflood/mfim.hpp"
#include "xflood/model.hpp"
#include "xflood/ops.hpp"
#include "xflood/uffm.hpp"

namespace xflood {

namespace {

constexpr std::size_t kBatch = 2;

Tensor uniform(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Magnitudes in [0.2, 1] with random sign, keeping inputs clear of kinks at 0.
Tensor off_zero(Shape s, Rng& rng) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = (rng.below(2) == 0 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
  return t;
}

class Suite {
 public:
  Suite(const GradcheckOptions& options, std::uint64_t seed) : options_(options), rng_(seed) {}

  Rng& rng() { return rng_; }

  /// Inputs live in the store as trainable "in.*" entries so they are checked too.
  void op(const std::string& name, std::vector<std::pair<std::string, Tensor>> inputs,
          std::function<Var(Graph&, ParamStore&)> f) {
    ParamStore store;
    for (auto& [n, t] : inputs) store.put(n, std::move(t), true);
    reports_.push_back(gradcheck(name, store, f, options_));
  }

  /// Module-level check: `build` registers parameters, `body` runs the forward.
  void module(const std::string& name, const std::function<void(ParamStore&)>& build,
              std::vector<std::pair<std::string, Tensor>> inputs, std::function<Var(const Context&)> body,
              Mode mode = Mode::kTrain) {
    ParamStore store(Rng::derive(options_.seed, name));
    build(store);
    perturb_gains(store);
    for (auto& [n, t] : inputs) store.put(n, std::move(t), true);
    auto forward = [body, mode](Graph& g, ParamStore& p) {
      Rng dropout_rng(99);
      Context ctx{g, p, mode, &dropout_rng, false};
      return body(ctx);
    };
    reports_.push_back(gradcheck(name, store, forward, options_));
  }

  std::vector<GradcheckReport> take() { return std::move(reports_); }

 private:
  // Constant-initialised tensors (ones/zeros) make many products degenerate;
  // jitter them so each path carries a generic gradient. Random weights keep
  // their scale so activations stay O(1) through deep stacks.
  void perturb_gains(ParamStore& store) {
    for (const std::string& n : store.trainable_names()) {
      auto data = store.mutable_value(n).data();
      if (std::adjacent_find(data.begin(), data.end(), std::not_equal_to<>()) != data.end()) continue;
      for (double& v : data) v += rng_.uniform(-0.3, 0.3);
    }
    for (const std::string& n : store.names()) {
      if (n.ends_with(".running_var")) {
        for (double& v : store.mutable_value(n).data()) v = rng_.uniform(0.5, 1.5);
      } else if (n.ends_with(".running_mean")) {
        for (double& v : store.mutable_value(n).data()) v = rng_.uniform(-0.2, 0.2);
      }
    }
  }

  GradcheckOptions options_;
  Rng rng_;
  std::vector<GradcheckReport> reports_;
};

Var in(ParamStore& p, Graph& g, const char* name) { return g.param(p, name); }

void tensor_core_checks(Suite& s) {
  Rng& r = s.rng();
  s.op("add_broadcast", {{"a", uniform({5, 4}, r)}, {"b", uniform({4}, r)}},
       [](Graph& g, ParamStore& p) { return add(in(p, g, "a"), in(p, g, "b")); });
  s.op("sub_broadcast", {{"a", uniform({2, 3, 4}, r)}, {"b", uniform({3, 1}, r)}},
       [](Graph& g, ParamStore& p) { return sub(in(p, g, "a"), in(p, g, "b")); });
  s.op("mul_broadcast", {{"a", uniform({4, 5}, r)}, {"b", uniform({4, 1}, r)}},
       [](Graph& g, ParamStore& p) { return mul(in(p, g, "a"), in(p, g, "b")); });
  s.op("mul_self", {{"a", uniform({24}, r)}},
       [](Graph& g, ParamStore& p) { return mul(in(p, g, "a"), in(p, g, "a")); });
  s.op("scale_add_scalar", {{"a", uniform({4, 6}, r)}},
       [](Graph& g, ParamStore& p) { return scale(add_scalar(in(p, g, "a"), 0.3), 1.7); });
  s.op("sigmoid", {{"a", uniform({4, 6}, r, -3, 3)}},
       [](Graph& g, ParamStore& p) { return sigmoid(in(p, g, "a")); });
  s.op("relu", {{"a", off_zero({4, 6}, r)}}, [](Graph& g, ParamStore& p) { return relu(in(p, g, "a")); });
  s.op("tanh", {{"a", uniform({4, 6}, r, -2, 2)}}, [](Graph& g, ParamStore& p) { return tanh(in(p, g, "a")); });
  s.op("softmax", {{"a", uniform({4, 6}, r, -2, 2)}},
       [](Graph& g, ParamStore& p) { return softmax(in(p, g, "a")); });
  s.op("layer_norm", {{"a", uniform({4, 6}, r)}},
       [](Graph& g, ParamStore& p) { return layer_norm(in(p, g, "a")); });
  s.op("reshape_transpose", {{"a", uniform({2, 3, 4}, r)}},
       [](Graph& g, ParamStore& p) { return transpose(reshape(in(p, g, "a"), Shape{6, 4})); });
  s.op("permute", {{"a", uniform({2, 3, 4}, r)}},
       [](Graph& g, ParamStore& p) { return permute(in(p, g, "a"), {2, 0, 1}); });
  s.op("concat", {{"a", uniform({2, 2, 2, 3}, r)}, {"b", uniform({2, 2, 2, 1}, r)}},
       [](Graph& g, ParamStore& p) {
         Var parts[] = {in(p, g, "a"), in(p, g, "b"), in(p, g, "a")};
         return concat(parts, 3);
       });
  s.op("slice", {{"a", uniform({4, 6}, r)}},
       [](Graph& g, ParamStore& p) { return slice(in(p, g, "a"), 1, 1, 3); });
  s.op("stack_unstack", {{"a", uniform({5, 4}, r)}},
       [](Graph& g, ParamStore& p) {
         std::vector<Var> rows = unstack(in(p, g, "a"));
         std::swap(rows[0], rows[2]);
         return stack(rows);
       });
  s.op("sum", {{"a", uniform({5, 4}, r)}}, [](Graph& g, ParamStore& p) { return sum(in(p, g, "a")); });
  s.op("mean_rows", {{"a", uniform({5, 4}, r)}},
       [](Graph& g, ParamStore& p) { return mean_rows(in(p, g, "a")); });
  s.op("matmul", {{"a", uniform({3, 4}, r)}, {"b", uniform({4, 5}, r)}},
       [](Graph& g, ParamStore& p) { return matmul(in(p, g, "a"), in(p, g, "b")); });
  s.op("batched_matmul", {{"a", uniform({2, 3, 4}, r)}, {"b", uniform({2, 4, 5}, r)}},
       [](Graph& g, ParamStore& p) { return batched_matmul(in(p, g, "a"), in(p, g, "b")); });
  s.op("batched_matmul_transposed", {{"a", uniform({2, 3, 4}, r)}, {"b", uniform({2, 5, 4}, r)}},
       [](Graph& g, ParamStore& p) { return batched_matmul(in(p, g, "a"), in(p, g, "b"), true); });
  s.op("linear", {{"x", uniform({3, 4}, r)}, {"w", uniform({4, 2}, r)}, {"b", uniform({2}, r)}},
       [](Graph& g, ParamStore& p) { return linear(in(p, g, "x"), in(p, g, "w"), in(p, g, "b")); });
  s.op("conv2d", {{"x", uniform({2, 5, 5, 4}, r)}, {"k", uniform({3, 3, 4, 3}, r)}},
       [](Graph& g, ParamStore& p) { return conv2d(in(p, g, "x"), in(p, g, "k")); });
  s.op("conv2d_grouped", {{"x", uniform({6, 6, 4}, r)}, {"k", uniform({3, 3, 2, 4}, r)}},
       [](Graph& g, ParamStore& p) { return conv2d(in(p, g, "x"), in(p, g, "k"), 2); });
  s.op("conv2d_depthwise_7x7", {{"x", uniform({1, 5, 6, 3}, r)}, {"k", uniform({7, 7, 1, 3}, r)}},
       [](Graph& g, ParamStore& p) { return conv2d(in(p, g, "x"), in(p, g, "k"), 3); });
  s.op("max_pool2", {{"x", uniform({2, 5, 6, 3}, r)}},
       [](Graph& g, ParamStore& p) { return max_pool2(in(p, g, "x")); });
  s.op("global_avg_pool", {{"x", uniform({2, 3, 4, 3}, r)}},
       [](Graph& g, ParamStore& p) { return global_avg_pool(in(p, g, "x")); });
  s.op("upsample_nearest2", {{"x", uniform({2, 3, 2, 2}, r)}},
       [](Graph& g, ParamStore& p) { return upsample_nearest2(in(p, g, "x")); });
  s.op("resize_nearest", {{"x", uniform({2, 7, 4, 2}, r)}},
       [](Graph& g, ParamStore& p) { return resize_nearest(in(p, g, "x"), 3, 5); });
  s.op("fft2d_magnitude", {{"x", uniform({2, 5, 7, 2}, r)}},
       [](Graph& g, ParamStore& p) { return fft2d_magnitude(in(p, g, "x")); });
  s.op("batch_norm_train",
       {{"x", uniform({2, 3, 3, 4}, r)}, {"gamma", uniform({4}, r, 0.5, 1.5)}, {"beta", uniform({4}, r)}},
       [](Graph& g, ParamStore& p) {
         Tensor mean(Shape{4}), var(Shape{4}, 1.0);
         BatchNormState st{&mean, &var, 0.9, false};
         return batch_norm(in(p, g, "x"), in(p, g, "gamma"), in(p, g, "beta"), Mode::kTrain, st);
       });
  s.op("batch_norm_eval",
       {{"x", uniform({3, 3, 4}, r)}, {"gamma", uniform({4}, r, 0.5, 1.5)}, {"beta", uniform({4}, r)}},
       [](Graph& g, ParamStore& p) {
         Tensor mean(Shape{4}, 0.1), var(Shape{4}, 0.7);
         BatchNormState st{&mean, &var, 0.9, false};
         return batch_norm(in(p, g, "x"), in(p, g, "gamma"), in(p, g, "beta"), Mode::kEval, st);
       });
  s.op("dropout", {{"x", uniform({4, 5}, r)}},
       [](Graph& g, ParamStore& p) {
         Rng fixed(5);
         return dropout(in(p, g, "x"), 0.3, Mode::kTrain, fixed);
       });
  s.op("bce_loss", {{"p", uniform({24, 1}, r, 0.05, 0.95)}},
       [](Graph& g, ParamStore& p) {
         std::vector<int> labels(24);
         for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = (i * 7 + 3) % 5 < 2 ? 1 : 0;
         return bce_loss(in(p, g, "p"), labels);
       });
}

void mfim_checks(Suite& s, const ModelConfig& c) {
  Rng& r = s.rng();
  const std::size_t d = c.d_se;
  const std::size_t B = kBatch;
  auto seq = [&](std::size_t n) { return uniform({B, n, d}, r); };
  auto text_in = [&] { return uniform({B, c.n_t, c.d_t}, r); };
  auto grid_in = [&] { return uniform({B, c.grid_h, c.grid_w, c.d_i}, r); };

  s.module("mfim.bilstm", [&](ParamStore& p) { register_bilstm(p, "lstm", d, d / 2); }, {{"in.x", seq(c.n_t)}},
           [](const Context& ctx) { return bilstm(ctx, ctx.p("in.x"), "lstm", ctx.p("in.x").shape()[2] / 2); });
  s.module("mfim.prepare_local_features", [&](ParamStore& p) { register_mfim(p, c); },
           {{"in.text", text_in()}, {"in.grid", grid_in()}}, [c](const Context& ctx) {
             LocalFeatures f = prepare_local_features(ctx, c, ctx.p("in.text"), ctx.p("in.grid"));
             Var parts[] = {f.text, f.image};
             return concat(parts, 1);
           });
  s.module("mfim.self_gate", [&](ParamStore& p) { register_dense(p, "gate", d, d); }, {{"in.x", seq(3)}},
           [](const Context& ctx) { return self_gate(ctx, ctx.p("in.x"), "gate"); });
  for (const AttentionLevel& level : attention_levels(d, c.h)) {
    s.module(std::string("mfim.attention_") + level.name(),
             [&](ParamStore& p) { register_attention(p, "att", d); }, {{"in.x", seq(c.n_t)}},
             [level](const Context& ctx) { return attention_level(ctx, ctx.p("in.x"), level, "att"); });
  }
  s.module("mfim.contextual_gating", [&](ParamStore& p) { register_dense(p, "ctx", d, d); },
           {{"in.att", seq(4)}, {"in.raw", seq(4)}},
           [](const Context& ctx) { return contextual_gating(ctx, ctx.p("in.att"), ctx.p("in.raw"), "ctx"); });
  s.module("mfim.cross_modal_attention",
           [&](ParamStore& p) {
             for (const char* dir : {"x.t2i", "x.i2t"}) {
               for (const char* w : {".q", ".k", ".v"}) p.add(std::string(dir) + w, Shape{d, d}, Init::kFanIn, d);
             }
           },
           {{"in.t", seq(c.n_t)}, {"in.i", seq(c.n_i())}}, [](const Context& ctx) {
             CrossModal cm = cross_modal_attention(ctx, ctx.p("in.t"), ctx.p("in.i"), "x");
             Var parts[] = {cm.text_to_image, cm.image_to_text};
             return concat(parts, 1);
           });
  s.module("mfim.joint_fusion",
           [&](ParamStore& p) {
             register_dense(p, "mln.0", d, d);
             register_dense(p, "mln.1", d, d);
           },
           {{"in.t", seq(c.n_t)}, {"in.i", seq(c.n_i())}},
           [](const Context& ctx) { return joint_fusion(ctx, ctx.p("in.t"), ctx.p("in.i"), "mln"); });
  s.module("mfim.forward", [&](ParamStore& p) { register_mfim(p, c); },
           {{"in.text", text_in()}, {"in.grid", grid_in()}},
           [c](const Context& ctx) { return mfim_forward(ctx, c, ctx.p("in.text"), ctx.p("in.grid")); });
}

void hcamam_checks(Suite& s, const ModelConfig& c) {
  Rng& r = s.rng();
  const std::size_t B = kBatch;
  const std::size_t H = c.hcamam_h();
  const std::size_t W = c.hcamam_w();
  const std::size_t C = c.hcamam_channels;
  auto map = [&](std::size_t ch) { return uniform({B, H, W, ch}, r); };

  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    s.module(mode == Mode::kTrain ? "hcamam.hren_train" : "hcamam.hren_eval",
             [&](ParamStore& p) { register_hren(p, "hren", 3, C, c.hcamam_groups, c.hcamam_kernel); },
             {{"in.x", map(3)}},
             [groups = c.hcamam_groups](const Context& ctx) {
               return hren_forward(ctx, ctx.p("in.x"), "hren", groups);
             },
             mode);
  }
  s.module("hcamam.feeca", [&](ParamStore& p) { register_feeca(p, "feeca", C); }, {{"in.x", map(C)}},
           [](const Context& ctx) { return feeca_forward(ctx, ctx.p("in.x"), "feeca"); });
  s.module("hcamam.fmsa", [&](ParamStore& p) { register_fmsa(p, "fmsa", C); }, {{"in.x", map(C)}},
           [](const Context& ctx) { return fmsa_forward(ctx, ctx.p("in.x"), "fmsa"); });
  s.module("hcamam.spatial_standardize", [](ParamStore&) {}, {{"in.x", map(C)}},
           [](const Context& ctx) { return spatial_standardize(ctx.p("in.x")); });
  const std::size_t g = c.d_t + c.d_i;
  s.module("hcamam.attention_fusion", [&](ParamStore& p) { register_dense(p, "fusion", H * W * 2 * C + g, c.d_fused); },
           {{"in.a", map(C)}, {"in.b", map(C)}, {"in.g", uniform({B, g}, r)}}, [](const Context& ctx) {
             Var maps[] = {ctx.p("in.a"), ctx.p("in.b")};
             return attention_fusion(ctx, maps, ctx.p("in.g"), "fusion");
           });
  s.module("hcamam.forward", [&](ParamStore& p) { register_hcamam(p, c); },
           {{"in.img", uniform({B, H, W, 3}, r, 0, 1)}, {"in.g", uniform({B, g}, r)}},
           [c](const Context& ctx) { return hcamam_forward(ctx, c, ctx.p("in.img"), ctx.p("in.g")); });
}

void cctfrm_checks(Suite& s, const ModelConfig& c) {
  Rng& r = s.rng();
  const std::size_t B = kBatch;
  const double rate = c.dropout;
  s.module("cctfrm.gated_block", [](ParamStore& p) { register_gated_block(p, "blk", 3, 4); },
           {{"in.x", uniform({B, 6, 6, 3}, r)}},
           [rate](const Context& ctx) { return gated_block(ctx, ctx.p("in.x"), "blk", rate, false); });
  s.module("cctfrm.gated_block_up", [](ParamStore& p) { register_gated_block(p, "blk", 4, 3); },
           {{"in.x", uniform({B, 3, 3, 4}, r)}},
           [rate](const Context& ctx) { return gated_block(ctx, ctx.p("in.x"), "blk", rate, true); });
  s.module("cctfrm.gated_block_eval", [](ParamStore& p) { register_gated_block(p, "blk", 3, 4); },
           {{"in.x", uniform({B, 6, 6, 3}, r)}},
           [rate](const Context& ctx) { return gated_block(ctx, ctx.p("in.x"), "blk", rate, false); }, Mode::kEval);
  const std::size_t d = c.encoder_plan.back();
  const std::size_t n = c.bottleneck_h() * c.bottleneck_w();
  s.module("cctfrm.transformer", [&](ParamStore& p) { register_transformer(p, "tf", d, c.transformer_depth); },
           {{"in.x", uniform({B, n, d}, r)}}, [c](const Context& ctx) {
             return transformer_encoder(ctx, ctx.p("in.x"), "tf", c.transformer_depth, c.transformer_heads);
           });
  s.module("cctfrm.decoder_cascade", [&](ParamStore& p) { register_decoder(p, "dec", d, c.decoder_plan); },
           {{"in.x", uniform({B, c.bottleneck_h(), c.bottleneck_w(), d}, r)}}, [c](const Context& ctx) {
             return decoder_cascade(ctx, ctx.p("in.x"), "dec", c.decoder_plan.size(), c.dropout);
           });
  const std::size_t ct = c.cascade_channels();
  s.module("cctfrm.harmonizer", [&](ParamStore& p) { register_harmonizer(p, "harm", ct); },
           {{"in.y", uniform({B, c.bottleneck_h(), c.bottleneck_w(), ct}, r)},
            {"in.img", uniform({B, c.image_h, c.image_w, 3}, r, 0, 1)}},
           [](const Context& ctx) {
             return reverse_feature_harmonization(ctx, ctx.p("in.y"), ctx.p("in.img"), "harm");
           });
  s.module("cctfrm.forward", [&](ParamStore& p) { register_cctfrm(p, c); },
           {{"in.img", uniform({B, c.image_h, c.image_w, 3}, r, 0, 1)}},
           [c](const Context& ctx) { return cctfrm_forward(ctx, c, ctx.p("in.img")); });
}

void uffm_checks(Suite& s, const ModelConfig& c) {
  Rng& r = s.rng();
  const std::size_t B = 4;
  const std::size_t w1 = c.d_fused, w2 = c.d_se, w3 = 24;
  s.module("uffm.head", [&](ParamStore& p) { register_head(p, "head", w1 + w2 + w3, c.d_fused); },
           {{"in.a", uniform({B, w1}, r)}, {"in.b", uniform({B, w2}, r)}, {"in.c", uniform({B, w3}, r)}},
           [](const Context& ctx) {
             Var parts[] = {ctx.p("in.a"), ctx.p("in.b"), ctx.p("in.c")};
             return uffm_forward(ctx, parts, "head");
           });
  s.module("uffm.head_bce", [&](ParamStore& p) { register_head(p, "head", w1 + w2, c.d_fused); },
           {{"in.a", uniform({B, w1}, r)}, {"in.b", uniform({B, w2}, r)}}, [](const Context& ctx) {
             Var parts[] = {ctx.p("in.a"), ctx.p("in.b")};
             const int labels[] = {1, 0, 1, 0};
             return bce_loss(uffm_forward(ctx, parts, "head"), labels);
           });
}

void model_checks(Suite& s, const ModelConfig& c, const GradcheckOptions& options) {
  const std::vector<SyntheticSample> data = generate_synthetic_dataset(kBatch, options.seed, 0.3, DataShape::from(c));
  auto run = [&](const std::string& name, ModelConfig cfg, Mode mode) {
    cfg.seed = options.seed;
    XFloodNet model(cfg);
    const Batch batch = model.make_batch(data);
    s.module(name, [&](ParamStore& p) { register_model(p, cfg); }, {},
             [&model, batch, mode](const Context& ctx) {
               const ModelOutputs out = model.forward(ctx, batch);
               return mode == Mode::kTrain ? bce_loss(out.probs, batch.labels) : out.logits;
             },
             mode);
  };
  run("model.train_loss", c, Mode::kTrain);
  run("model.eval_logits", c, Mode::kEval);
}

}  // namespace

const std::vector<std::string>& gradcheck_selectors() {
  static const std::vector<std::string> s = {"tensor_core", "mfim", "hcamam", "cctfrm", "uffm", "model", "all"};
  return s;
}

std::vector<GradcheckReport> run_gradcheck_suite(const ModelConfig& config, const std::string& selector,
                                                 const GradcheckOptions& options) {
  bool known = false;
  for (const std::string& k : gradcheck_selectors()) known = known || k == selector;
  if (!known) {
    std::string list;
    for (const std::string& k : gradcheck_selectors()) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("unknown gradcheck module '" + selector + "'; expected one of: " + list);
  }
  Suite s(options, Rng::derive(options.seed, selector));
  const bool all = selector == "all";
  if (all || selector == "tensor_core") tensor_core_checks(s);
  if (all || selector == "mfim") mfim_checks(s, config);
  if (all || selector == "hcamam") hcamam_checks(s, config);
  if (all || selector == "cctfrm") cctfrm_checks(s, config);
  if (all || selector == "uffm") uffm_checks(s, config);
  if (all || selector == "model") model_checks(s, config, options);
  return s.take();
}

}  // namespace xflood
