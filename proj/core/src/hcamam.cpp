#include "xflood/hcamam.hpp"

#include <vector>

#include "xflood/errors.hpp"

namespace xflood {

void register_hren(ParamStore& store, const std::string& prefix, std::size_t cin, std::size_t cout,
                   std::size_t groups, std::size_t kernel) {
  register_conv(store, prefix + ".group", kernel, cin, cout, groups);
  register_conv(store, prefix + ".pre", 1, cin, cout);
  register_batch_norm(store, prefix + ".bn", cout);
  register_conv(store, prefix + ".point", 1, cout, cout);
  if (cin != cout) register_conv(store, prefix + ".res", 1, cin, cout);
}

Var hren_forward(const Context& ctx, Var x, const std::string& prefix, std::size_t groups) {
  Var grouped = conv(ctx, x, prefix + ".group", groups);
  Var pointwise = conv(ctx, batch_norm(ctx, conv(ctx, x, prefix + ".pre"), prefix + ".bn"), prefix + ".point");
  Var residual = ctx.params.contains(prefix + ".res.kernel") ? conv(ctx, x, prefix + ".res") : x;
  return add(add(grouped, pointwise), residual);
}

void register_feeca(ParamStore& store, const std::string& prefix, std::size_t channels) {
  store.add(prefix + ".conv1d.kernel", Shape{1, 3, 1, 1}, Init::kFanIn, 3);
  store.add(prefix + ".conv1d.bias", Shape{1}, Init::kZeros);
  register_dense(store, prefix + ".proj", channels, channels);
  store.add(prefix + ".scale", Shape{channels}, Init::kOnes);
}

Var feeca_forward(const Context& ctx, Var x, const std::string& prefix) {
  const Shape& s = x.shape();
  if (s.rank() != 4) throw DimensionError("feeca expects B x H x W x C, got " + s.str());
  const std::size_t B = s[0];
  const std::size_t H = s[1];
  const std::size_t W = s[2];
  const std::size_t C = s[3];

  // Channel descriptor, 1D conv along channels, cross-channel projection.
  Var pooled = reshape(global_avg_pool(x), Shape{B, 1, C, 1});
  Var local = add(conv2d(pooled, ctx.p(prefix + ".conv1d.kernel")), ctx.p(prefix + ".conv1d.bias"));
  Var y_proj = dense(ctx, reshape(local, Shape{B, C}), prefix + ".proj");

  // Frequency-scaled spatial response.
  Var sff = mul(fft2d_magnitude(x), ctx.p(prefix + ".scale"));
  Var response = batched_matmul(reshape(sff, Shape{B, H * W, C}), reshape(y_proj, Shape{B, C, 1}));
  Var y_att = sigmoid(reshape(response, Shape{B, H * W}));

  Var att_map = reshape(layer_norm(y_att), Shape{B, H, W, 1});
  return mul(att_map, layer_norm(x));
}

void register_fmsa(ParamStore& store, const std::string& prefix, std::size_t channels) {
  if (channels % 4 != 0) {
    throw ConfigError("fmsa: channel count " + std::to_string(channels) + " is not divisible by 4");
  }
  for (std::size_t k : {3, 5, 7}) register_conv(store, prefix + ".ms" + std::to_string(k), k, channels, 1);
  register_dense(store, prefix + ".proj", channels, channels, false);
  register_conv(store, prefix + ".spatial", 7, channels, channels, channels);
  register_dense(store, prefix + ".reduce", channels, channels / 4, false);
  register_dense(store, prefix + ".expand", channels / 4, channels, false);
  register_gain(store, prefix + ".w_att");
  register_gain(store, prefix + ".w_refined");
}

Var spatial_standardize(Var x) {
  const Shape& s = x.shape();
  const std::size_t B = s[0];
  const std::size_t HW = s[1] * s[2];
  const std::size_t C = s[3];
  Var by_channel = permute(reshape(x, Shape{B, HW, C}), {0, 2, 1});
  Var normed = permute(layer_norm(by_channel), {0, 2, 1});
  return reshape(normed, s);
}

Var fmsa_forward(const Context& ctx, Var x, const std::string& prefix) {
  const Shape& s = x.shape();
  if (s.rank() != 4) throw DimensionError("fmsa expects B x H x W x C, got " + s.str());
  const std::size_t B = s[0];
  const std::size_t H = s[1];
  const std::size_t W = s[2];
  const std::size_t C = s[3];

  Var z = conv(ctx, x, prefix + ".ms3");
  z = add(z, conv(ctx, x, prefix + ".ms5"));
  z = add(z, conv(ctx, x, prefix + ".ms7"));
  Var a_spatial = sigmoid(z);

  Var f_freq = fft2d_magnitude(x);
  Var a_agg = mul(a_spatial, f_freq);
  Var f_norm = spatial_standardize(f_freq);
  Var combined = reshape(mul(a_agg, f_norm), Shape{B * H * W, C});
  Var a_proj = reshape(matmul(combined, ctx.p(prefix + ".proj.weight")), s);

  Var spatial = conv2d(a_proj, ctx.p(prefix + ".spatial.kernel"), C);
  Var reduced = relu(matmul(reshape(spatial, Shape{B * H * W, C}), ctx.p(prefix + ".reduce.weight")));
  Var a_refined = reshape(sigmoid(matmul(reduced, ctx.p(prefix + ".expand.weight"))), s);

  Var modulation = mul(mul(a_proj, ctx.p(prefix + ".w_att")), mul(a_refined, ctx.p(prefix + ".w_refined")));
  return mul(x, modulation);
}

Var attention_fusion(const Context& ctx, std::span<const Var> maps, Var globals, const std::string& prefix) {
  Var stacked = maps.size() == 1 ? maps[0] : concat(maps, 3);
  const std::size_t B = stacked.shape()[0];
  Var flat = reshape(stacked, Shape{B, stacked.shape().numel() / B});
  Var parts[] = {flat, globals};
  return relu(dense(ctx, concat(parts, 1), prefix));
}

void register_hcamam(ParamStore& store, const ModelConfig& c) {
  register_hren(store, "hcamam.hren", 3, c.hcamam_channels, c.hcamam_groups, c.hcamam_kernel);
  if (c.use_feeca) register_feeca(store, "hcamam.feeca", c.hcamam_channels);
  if (c.use_fmsa) register_fmsa(store, "hcamam.fmsa", c.hcamam_channels);
  register_dense(store, "hcamam.fusion", c.fusion_input_width(), c.d_fused);
}

Var hcamam_forward(const Context& ctx, const ModelConfig& c, Var pooled_image, Var globals) {
  Var features = hren_forward(ctx, pooled_image, "hcamam.hren", c.hcamam_groups);
  std::vector<Var> maps;
  if (c.use_feeca) maps.push_back(feeca_forward(ctx, features, "hcamam.feeca"));
  if (c.use_fmsa) maps.push_back(fmsa_forward(ctx, features, "hcamam.fmsa"));
  if (maps.empty()) maps.push_back(features);
  return attention_fusion(ctx, maps, globals, "hcamam.fusion");
}

}  // namespace xflood
