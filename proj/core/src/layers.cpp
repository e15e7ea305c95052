#include "xflood/layers.hpp"

#include <cmath>

#include "xflood/errors.hpp"

namespace xflood {

void register_dense(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool bias) {
  store.add(prefix + ".weight", Shape{in, out}, Init::kFanIn, in);
  if (bias) store.add(prefix + ".bias", Shape{out}, Init::kZeros);
}

void register_conv(ParamStore& store, const std::string& prefix, std::size_t k, std::size_t cin, std::size_t cout,
                   std::size_t groups, bool bias) {
  if (groups == 0 || cin % groups != 0 || cout % groups != 0) {
    throw ConfigError(prefix + ": channels " + std::to_string(cin) + "->" + std::to_string(cout) +
                      " not divisible by groups " + std::to_string(groups));
  }
  store.add(prefix + ".kernel", Shape{k, k, cin / groups, cout}, Init::kFanIn, k * k * (cin / groups));
  if (bias) store.add(prefix + ".bias", Shape{cout}, Init::kZeros);
}

void register_batch_norm(ParamStore& store, const std::string& prefix, std::size_t channels) {
  store.add(prefix + ".gamma", Shape{channels}, Init::kOnes);
  store.add(prefix + ".beta", Shape{channels}, Init::kZeros);
  store.add_buffer(prefix + ".running_mean", Tensor(Shape{channels}, 0.0));
  store.add_buffer(prefix + ".running_var", Tensor(Shape{channels}, 1.0));
}

void register_gain(ParamStore& store, const std::string& name) { store.add(name, Shape{1}, Init::kOnes); }

void register_attention(ParamStore& store, const std::string& prefix, std::size_t d) {
  for (const char* w : {".q", ".k", ".v", ".o"}) store.add(prefix + w, Shape{d, d}, Init::kFanIn, d);
}

Var dense(const Context& ctx, Var x, const std::string& prefix, bool bias) {
  Var y = matmul(x, ctx.p(prefix + ".weight"));
  return bias ? add(y, ctx.p(prefix + ".bias")) : y;
}

Var conv(const Context& ctx, Var x, const std::string& prefix, std::size_t groups, bool bias) {
  Var y = conv2d(x, ctx.p(prefix + ".kernel"), groups);
  return bias ? add(y, ctx.p(prefix + ".bias")) : y;
}

Var batch_norm(const Context& ctx, Var x, const std::string& prefix) {
  BatchNormState state;
  state.running_mean = &ctx.params.mutable_value(prefix + ".running_mean");
  state.running_var = &ctx.params.mutable_value(prefix + ".running_var");
  state.update = ctx.update_bn_stats;
  return batch_norm(x, ctx.p(prefix + ".gamma"), ctx.p(prefix + ".beta"), ctx.mode, state);
}

Var dropout(const Context& ctx, Var x, double rate) {
  if (ctx.mode == Mode::kEval || rate == 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("train-mode dropout needs a random generator in the context");
  return dropout(x, rate, ctx.mode, *ctx.rng);
}

Var matmul_rows(Var x, Var weight) {
  const Shape& s = x.shape();
  if (s.rank() != 3) throw DimensionError("matmul_rows expects B x n x d, got " + s.str());
  Var flat = reshape(x, Shape{s[0] * s[1], s[2]});
  Var y = matmul(flat, weight);
  return reshape(y, Shape{s[0], s[1], y.shape()[1]});
}

Var attention(const Context& ctx, Var q, Var k, Var v, std::size_t heads, double scale) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  if (qs.rank() != 3 || ks.rank() != 3 || v.shape() != ks || qs[0] != ks[0] || qs[2] != ks[2]) {
    throw DimensionError("attention: incompatible q " + qs.str() + ", k " + ks.str() + ", v " + v.shape().str());
  }
  const std::size_t B = qs[0];
  const std::size_t nq = qs[1];
  const std::size_t nk = ks[1];
  const std::size_t d = qs[2];
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide width " + std::to_string(d));
  }
  const std::size_t hd = d / heads;
  auto split = [&](Var x, std::size_t n) {
    Var r = reshape(x, Shape{B, n, heads, hd});
    r = permute(r, {0, 2, 1, 3});
    return reshape(r, Shape{B * heads, n, hd});
  };
  Var qh = split(q, nq);
  Var kh = split(k, nk);
  Var vh = split(v, nk);
  Var weights = softmax(xflood::scale(batched_matmul(qh, kh, true), 1.0 / scale));
  if (ctx.attention_probe) ctx.attention_probe->push_back(weights.value());
  Var out = batched_matmul(weights, vh);
  out = reshape(out, Shape{B, heads, nq, hd});
  out = permute(out, {0, 2, 1, 3});
  return reshape(out, Shape{B, nq, d});
}

Var projected_attention(const Context& ctx, Var x_q, Var x_kv, const std::string& prefix, std::size_t heads,
                        double scale) {
  Var q = matmul_rows(x_q, ctx.p(prefix + ".q"));
  Var k = matmul_rows(x_kv, ctx.p(prefix + ".k"));
  Var v = matmul_rows(x_kv, ctx.p(prefix + ".v"));
  return matmul_rows(attention(ctx, q, k, v, heads, scale), ctx.p(prefix + ".o"));
}

Tensor sinusoidal_positions(std::size_t positions, std::size_t d) {
  Tensor pe(Shape{positions, d});
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double pair = static_cast<double>(i - i % 2);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(d));
      pe[pos * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace xflood
