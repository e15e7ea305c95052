#include "xflood/mfim.hpp"

#include <algorithm>
#include <cmath>

#include "xflood/errors.hpp"
#include "xflood/rng.hpp"

namespace xflood {

Tensor stub_text_table(std::uint64_t seed, std::size_t vocab, std::size_t d_t) {
  Rng rng(Rng::derive(seed, "stub.text_table"));
  Tensor table(Shape{vocab, d_t});
  const double s = 1.0 / std::sqrt(static_cast<double>(d_t));
  for (double& v : table.data()) v = s * rng.normal();
  return table;
}

Tensor stub_text_encoder(std::span<const int> tokens, const Tensor& table) {
  if (tokens.empty()) throw InputError("stub_text_encoder: token list is empty");
  if (tokens.size() > 512) {
    throw InputError("stub_text_encoder: at most 512 tokens, got " + std::to_string(tokens.size()));
  }
  const std::size_t vocab = table.shape()[0];
  const std::size_t d = table.shape()[1];
  Tensor out(Shape{tokens.size(), d});
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    const int id = tokens[j];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InputError("stub_text_encoder: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
    std::copy_n(table.ptr() + static_cast<std::size_t>(id) * d, d, out.ptr() + j * d);
  }
  return out;
}

Tensor patch_means(const Tensor& image, std::size_t grid_h, std::size_t grid_w) {
  if (image.rank() != 3) throw DimensionError("patch_means expects H x W x C, got " + image.shape().str());
  const std::size_t H = image.shape()[0];
  const std::size_t W = image.shape()[1];
  const std::size_t C = image.shape()[2];
  if (grid_h == 0 || grid_w == 0 || H % grid_h != 0 || W % grid_w != 0) {
    throw InputError("image " + image.shape().str() + " is not divisible into a " + std::to_string(grid_h) + "x" +
                     std::to_string(grid_w) + " grid");
  }
  const std::size_t ph = H / grid_h;
  const std::size_t pw = W / grid_w;
  Tensor out(Shape{grid_h, grid_w, C});
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < C; ++c) out[((y / ph) * grid_w + x / pw) * C + c] += image[(y * W + x) * C + c];
    }
  }
  const double inv = 1.0 / static_cast<double>(ph * pw);
  for (double& v : out.data()) v *= inv;
  return out;
}

Tensor stub_image_map(std::uint64_t seed, std::size_t d_i) {
  Rng rng(Rng::derive(seed, "stub.image_map"));
  Tensor map(Shape{3, d_i});
  for (double& v : map.data()) v = rng.normal();
  return map;
}

Tensor stub_image_encoder(const Tensor& image, std::size_t grid_h, std::size_t grid_w, const Tensor& map) {
  const Tensor means = patch_means(image, grid_h, grid_w);
  const std::size_t C = means.shape()[2];
  if (map.rank() != 2 || map.shape()[0] != C) {
    throw DimensionError("stub_image_encoder: map " + map.shape().str() + " does not accept " + std::to_string(C) +
                         " channels");
  }
  const std::size_t d = map.shape()[1];
  Tensor out(Shape{grid_h, grid_w, d});
  for (std::size_t p = 0; p < grid_h * grid_w; ++p) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t j = 0; j < d; ++j) out[p * d + j] += means[p * C + c] * map[c * d + j];
    }
  }
  return out;
}

Tensor global_features(const Tensor& text, const Tensor& grid) {
  if (text.rank() != 2 || grid.rank() != 3) {
    throw DimensionError("global_features expects n_t x d_t and H x W x d_i, got " + text.shape().str() + " and " +
                         grid.shape().str());
  }
  const std::size_t n = text.shape()[0];
  const std::size_t dt = text.shape()[1];
  const std::size_t cells = grid.shape()[0] * grid.shape()[1];
  const std::size_t di = grid.shape()[2];
  Tensor out(Shape{dt + di});
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < dt; ++c) out[c] += text[j * dt + c];
  }
  for (std::size_t c = 0; c < dt; ++c) out[c] /= static_cast<double>(n);
  for (std::size_t p = 0; p < cells; ++p) {
    for (std::size_t c = 0; c < di; ++c) out[dt + c] += grid[p * di + c];
  }
  for (std::size_t c = 0; c < di; ++c) out[dt + c] /= static_cast<double>(cells);
  return out;
}

const char* AttentionLevel::name() const {
  switch (level) {
    case Granularity::kCoarse:
      return "coarse";
    case Granularity::kMedium:
      return "medium";
    case Granularity::kFine:
      return "fine";
  }
  return "?";
}

std::vector<AttentionLevel> attention_levels(std::size_t d_se, std::size_t h) {
  if (h < 2 || h % 2 != 0) throw ConfigError("h: must be even and >= 2, got " + std::to_string(h));
  if (d_se % (2 * h) != 0) {
    throw ConfigError("d_se: " + std::to_string(d_se) + " is not divisible by 2*h = " + std::to_string(2 * h));
  }
  return {{Granularity::kCoarse, h / 2, d_se / (h / 2)},
          {Granularity::kMedium, h, d_se / h},
          {Granularity::kFine, 2 * h, d_se / (2 * h)}};
}

std::vector<std::size_t> multiscale_split(std::size_t d) {
  std::vector<std::size_t> out(3, d / 3);
  for (std::size_t k = 0; k < d % 3; ++k) out[k] += 1;
  return out;
}

void register_bilstm(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden) {
  for (const char* dir : {".fwd", ".bwd"}) {
    const std::string p = prefix + dir;
    store.add(p + ".wx", Shape{in, 4 * hidden}, Init::kFanIn, in);
    store.add(p + ".wh", Shape{hidden, 4 * hidden}, Init::kFanIn, hidden);
    store.add(p + ".b", Shape{4 * hidden}, Init::kZeros);
  }
}

void register_mfim(ParamStore& store, const ModelConfig& c) {
  const std::size_t d = c.d_se;
  register_dense(store, "mfim.text.proj", c.d_t, d);
  register_bilstm(store, "mfim.text.lstm", d, d / 2);
  register_dense(store, "mfim.image.proj", c.d_i, d);
  const std::vector<std::size_t> split = multiscale_split(d);
  const std::size_t kernels[] = {3, 5, 7};
  for (std::size_t i = 0; i < 3; ++i) {
    register_conv(store, "mfim.image.conv" + std::to_string(kernels[i]), kernels[i], d, split[i], 1, true);
  }
  register_dense(store, "mfim.image.mix", d, d);
  for (const char* m : {"text", "image"}) {
    const std::string p = std::string("mfim.") + m;
    register_dense(store, p + ".gate", d, d);
    if (c.use_hcgam) {
      for (const AttentionLevel& level : attention_levels(d, c.h)) register_attention(store, p + "." + level.name(), d);
      register_dense(store, p + ".context", d, d);
    }
  }
  if (c.use_hcgam) {
    for (const char* dir : {"mfim.cross.t2i", "mfim.cross.i2t"}) {
      for (const char* w : {".q", ".k", ".v"}) store.add(std::string(dir) + w, Shape{d, d}, Init::kFanIn, d);
    }
  }
  register_dense(store, "mfim.mln.0", d, d);
  register_dense(store, "mfim.mln.1", d, d);
}

namespace {

Var lstm_direction(const Context& ctx, Var x, const std::string& prefix, std::size_t hidden, bool reverse) {
  const std::size_t B = x.shape()[0];
  const std::size_t n = x.shape()[1];
  Var xw = add(matmul_rows(x, ctx.p(prefix + ".wx")), ctx.p(prefix + ".b"));
  Var wh = ctx.p(prefix + ".wh");
  Var h = ctx.constant(Tensor(Shape{B, hidden}));
  Var c = ctx.constant(Tensor(Shape{B, hidden}));
  std::vector<Var> outputs(n);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    Var z = add(reshape(slice(xw, 1, t, 1), Shape{B, 4 * hidden}), matmul(h, wh));
    Var i = sigmoid(slice(z, 1, 0, hidden));
    Var f = sigmoid(slice(z, 1, hidden, hidden));
    Var g = tanh(slice(z, 1, 2 * hidden, hidden));
    Var o = sigmoid(slice(z, 1, 3 * hidden, hidden));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, tanh(c));
    outputs[t] = reshape(h, Shape{B, 1, hidden});
  }
  return concat(outputs, 1);
}

}  // namespace

Var bilstm(const Context& ctx, Var x, const std::string& prefix, std::size_t hidden) {
  if (x.shape().rank() != 3) throw DimensionError("bilstm expects B x n x d, got " + x.shape().str());
  Var parts[] = {lstm_direction(ctx, x, prefix + ".fwd", hidden, false),
                 lstm_direction(ctx, x, prefix + ".bwd", hidden, true)};
  return concat(parts, 2);
}

LocalFeatures prepare_local_features(const Context& ctx, const ModelConfig& c, Var text, Var grid) {
  const std::size_t d = c.d_se;
  if (d % 2 != 0) throw ConfigError("d_se: must be even for the bidirectional recurrence");
  const std::size_t B = text.shape()[0];

  Var t = matmul_rows(text, ctx.p("mfim.text.proj.weight"));
  t = add(t, ctx.p("mfim.text.proj.bias"));
  t = bilstm(ctx, t, "mfim.text.lstm", d / 2);

  const Shape& gs = grid.shape();
  const std::size_t gh = gs[1];
  const std::size_t gw = gs[2];
  Var img = reshape(dense(ctx, reshape(grid, Shape{B * gh * gw, gs[3]}), "mfim.image.proj"), Shape{B, gh, gw, d});
  std::vector<Var> scales;
  for (std::size_t k : {3, 5, 7}) scales.push_back(conv(ctx, img, "mfim.image.conv" + std::to_string(k), 1, true));
  Var multi = concat(scales, 3);
  Var mixed = dense(ctx, reshape(multi, Shape{B * gh * gw, d}), "mfim.image.mix");
  return {t, reshape(mixed, Shape{B, gh * gw, d})};
}

Var self_gate(const Context& ctx, Var x, const std::string& prefix) {
  Var lin = add(matmul_rows(x, ctx.p(prefix + ".weight")), ctx.p(prefix + ".bias"));
  return mul(x, sigmoid(lin));
}

Var attention_level(const Context& ctx, Var x, const AttentionLevel& level, const std::string& prefix) {
  return projected_attention(ctx, x, x, prefix, level.heads, std::sqrt(static_cast<double>(level.head_dim)));
}

Var multi_granularity_attention(const Context& ctx, const ModelConfig& c, Var x, const std::string& prefix) {
  Var y = x;
  for (const AttentionLevel& level : attention_levels(c.d_se, c.h)) {
    y = attention_level(ctx, y, level, prefix + "." + level.name());
  }
  return y;
}

Var contextual_gating(const Context& ctx, Var att, Var h_raw, const std::string& prefix) {
  Var lin = add(matmul_rows(h_raw, ctx.p(prefix + ".weight")), ctx.p(prefix + ".bias"));
  return mul(sigmoid(layer_norm(lin)), att);
}

CrossModal cross_modal_attention(const Context& ctx, Var g_t, Var g_i, const std::string& prefix) {
  const double scale = std::sqrt(static_cast<double>(g_t.shape()[2]));
  auto direction = [&](Var from, Var to, const std::string& p) {
    Var q = matmul_rows(from, ctx.p(p + ".q"));
    Var k = matmul_rows(to, ctx.p(p + ".k"));
    Var v = matmul_rows(to, ctx.p(p + ".v"));
    return attention(ctx, q, k, v, 1, scale);
  };
  return {direction(g_t, g_i, prefix + ".t2i"), direction(g_i, g_t, prefix + ".i2t")};
}

Var joint_fusion(const Context& ctx, Var a_t, Var a_i, const std::string& prefix) {
  Var parts[] = {a_t, a_i};
  Var a = concat(parts, 1);
  const std::size_t B = a.shape()[0];
  const std::size_t L = a.shape()[1];
  const std::size_t d = a.shape()[2];
  Var refined = mul(a, sigmoid(a));
  Var weights = ctx.constant(Tensor(Shape{B, 1, L}, 1.0 / static_cast<double>(L)));
  Var pooled = reshape(batched_matmul(weights, refined), Shape{B, d});
  Var hidden = relu(dense(ctx, pooled, prefix + ".0"));
  return dense(ctx, hidden, prefix + ".1");
}

Var mfim_forward(const Context& ctx, const ModelConfig& c, Var text, Var grid) {
  const LocalFeatures local = prepare_local_features(ctx, c, text, grid);
  Var g_t = self_gate(ctx, local.text, "mfim.text.gate");
  Var g_i = self_gate(ctx, local.image, "mfim.image.gate");
  if (!c.use_hcgam) return joint_fusion(ctx, g_t, g_i, "mfim.mln");
  Var a_t = multi_granularity_attention(ctx, c, g_t, "mfim.text");
  Var a_i = multi_granularity_attention(ctx, c, g_i, "mfim.image");
  Var c_t = contextual_gating(ctx, a_t, local.text, "mfim.text.context");
  Var c_i = contextual_gating(ctx, a_i, local.image, "mfim.image.context");
  const CrossModal cross = cross_modal_attention(ctx, c_t, c_i, "mfim.cross");
  return joint_fusion(ctx, cross.text_to_image, cross.image_to_text, "mfim.mln");
}

}  // namespace xflood
