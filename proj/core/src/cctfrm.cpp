#include "xflood/cctfrm.hpp"

#include <cmath>

#include "xflood/errors.hpp"

namespace xflood {

void register_gated_block(ParamStore& store, const std::string& prefix, std::size_t cin, std::size_t cout) {
  register_conv(store, prefix, 3, cin, cout);
  register_batch_norm(store, prefix + ".bn", cout);
}

Var gated_block(const Context& ctx, Var x, const std::string& prefix, double dropout_rate, bool upsample_first,
                Var* tap) {
  Var in = upsample_first ? upsample_nearest2(x) : x;
  Var g = conv(ctx, in, prefix);
  Var act = relu(mul(g, sigmoid(g)));
  if (tap) *tap = act;
  Var y = batch_norm(ctx, dropout(ctx, act, dropout_rate), prefix + ".bn");
  return max_pool2(y);
}

void register_encoder(ParamStore& store, const std::string& prefix, std::size_t cin,
                      const std::vector<std::size_t>& plan) {
  for (std::size_t i = 0; i < plan.size(); ++i) {
    register_gated_block(store, prefix + "." + std::to_string(i), i == 0 ? cin : plan[i - 1], plan[i]);
  }
}

Var encoder(const Context& ctx, Var x, const std::string& prefix, std::size_t stages, double dropout_rate,
            std::vector<Var>* taps) {
  const Shape& s = x.shape();
  const std::size_t factor = std::size_t{1} << stages;
  if (s.rank() != 4 || s[1] % factor != 0 || s[2] % factor != 0) {
    throw ConfigError("encoder_plan: input " + s.str() + " is not divisible by 2^" + std::to_string(stages));
  }
  Var y = x;
  for (std::size_t i = 0; i < stages; ++i) {
    Var tap;
    y = gated_block(ctx, y, prefix + "." + std::to_string(i), dropout_rate, false, &tap);
    if (taps) taps->push_back(tap);
  }
  return y;
}

void register_transformer(ParamStore& store, const std::string& prefix, std::size_t d, std::size_t depth) {
  for (std::size_t l = 0; l < depth; ++l) {
    const std::string p = prefix + "." + std::to_string(l);
    register_attention(store, p + ".attn", d);
    register_dense(store, p + ".ffn.0", d, 2 * d);
    register_dense(store, p + ".ffn.1", 2 * d, d);
  }
}

Var transformer_encoder(const Context& ctx, Var x, const std::string& prefix, std::size_t depth, std::size_t heads) {
  const Shape& s = x.shape();
  if (s.rank() != 3) throw DimensionError("transformer expects B x n x d, got " + s.str());
  const std::size_t B = s[0];
  const std::size_t n = s[1];
  const std::size_t d = s[2];
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("transformer_heads: " + std::to_string(heads) + " does not divide width " + std::to_string(d));
  }
  const double scale = std::sqrt(static_cast<double>(d / heads));
  Var h = add(x, ctx.constant(sinusoidal_positions(n, d)));
  for (std::size_t l = 0; l < depth; ++l) {
    const std::string p = prefix + "." + std::to_string(l);
    Var normed = layer_norm(h);
    h = add(h, projected_attention(ctx, normed, normed, p + ".attn", heads, scale));
    Var rows = reshape(layer_norm(h), Shape{B * n, d});
    Var ff = dense(ctx, relu(dense(ctx, rows, p + ".ffn.0")), p + ".ffn.1");
    h = add(h, reshape(ff, s));
  }
  return h;
}

void register_decoder(ParamStore& store, const std::string& prefix, std::size_t cin,
                      const std::vector<std::size_t>& plan) {
  for (std::size_t i = 0; i < plan.size(); ++i) {
    register_gated_block(store, prefix + "." + std::to_string(i), i == 0 ? cin : plan[i - 1], plan[i]);
  }
}

Var decoder_cascade(const Context& ctx, Var x, const std::string& prefix, std::size_t stages, double dropout_rate,
                    std::vector<Var>* stage_outputs) {
  if (stages == 0) throw ConfigError("decoder_plan: must have at least one stage");
  std::vector<Var> outputs;
  Var y = x;
  for (std::size_t i = 0; i < stages; ++i) {
    y = gated_block(ctx, y, prefix + "." + std::to_string(i), dropout_rate, true);
    outputs.push_back(y);
  }
  if (stage_outputs) *stage_outputs = outputs;
  return outputs.size() == 1 ? outputs[0] : concat(outputs, 3);
}

void register_harmonizer(ParamStore& store, const std::string& prefix, std::size_t channels) {
  register_conv(store, prefix + ".adapter", 3, 3, channels);
  register_batch_norm(store, prefix + ".adapter_bn", channels);
  register_batch_norm(store, prefix + ".cascade_bn", channels);
  for (const char* g : {".beta", ".g_cascade", ".g_image", ".alpha_cascade", ".alpha_sub"}) {
    register_gain(store, prefix + g);
  }
}

Var image_adapter(const Context& ctx, Var raw_image, const std::string& prefix, std::size_t out_h,
                  std::size_t out_w) {
  Var resized = resize_nearest(raw_image, out_h, out_w);
  return batch_norm(ctx, conv(ctx, resized, prefix + ".adapter"), prefix + ".adapter_bn");
}

Var harmonize(const Context& ctx, Var y_norm, Var x_norm, const std::string& prefix) {
  if (y_norm.shape() != x_norm.shape()) {
    throw ConfigError("harmonizer: adapter output " + x_norm.shape().str() + " does not match cascade " +
                      y_norm.shape().str());
  }
  Var y_sub = sub(mul(x_norm, ctx.p(prefix + ".beta")), sigmoid(y_norm));
  Var gate = sigmoid(add(mul(y_norm, ctx.p(prefix + ".g_cascade")), mul(x_norm, ctx.p(prefix + ".g_image"))));
  Var mix = add(mul(y_norm, ctx.p(prefix + ".alpha_cascade")), mul(y_sub, ctx.p(prefix + ".alpha_sub")));
  return mul(gate, mix);
}

Var reverse_feature_harmonization(const Context& ctx, Var y_cascade, Var raw_image, const std::string& prefix) {
  const Shape& s = y_cascade.shape();
  if (s.rank() != 4) throw DimensionError("harmonizer expects B x H x W x C, got " + s.str());
  const std::string kernel = prefix + ".adapter.kernel";
  if (ctx.params.value(kernel).shape()[3] != s[3]) {
    throw ConfigError("harmonizer: adapter emits " + std::to_string(ctx.params.value(kernel).shape()[3]) +
                      " channels, cascade has " + std::to_string(s[3]));
  }
  Var x_norm = image_adapter(ctx, raw_image, prefix, s[1], s[2]);
  Var y_norm = batch_norm(ctx, y_cascade, prefix + ".cascade_bn");
  Var out = harmonize(ctx, y_norm, x_norm, prefix);
  return reshape(out, Shape{s[0], s[1] * s[2] * s[3]});
}

void register_cctfrm(ParamStore& store, const ModelConfig& c) {
  register_encoder(store, "cctfrm.enc", 3, c.encoder_plan);
  register_transformer(store, "cctfrm.tf", c.encoder_plan.back(), c.transformer_depth);
  register_decoder(store, "cctfrm.dec", c.encoder_plan.back(), c.decoder_plan);
  register_harmonizer(store, "cctfrm.harm", c.cascade_channels());
}

Var cctfrm_forward(const Context& ctx, const ModelConfig& c, Var raw_image, CctfrmTaps* taps) {
  std::vector<Var>* enc_taps = taps ? &taps->encoder_activations : nullptr;
  Var encoded = encoder(ctx, raw_image, "cctfrm.enc", c.encoder_plan.size(), c.dropout, enc_taps);
  const Shape es = encoded.shape();
  // Each spatial cell of the bottleneck becomes one token.
  Var tokens = reshape(encoded, Shape{es[0], es[1] * es[2], es[3]});
  Var refined = reshape(transformer_encoder(ctx, tokens, "cctfrm.tf", c.transformer_depth, c.transformer_heads), es);
  Var cascade = decoder_cascade(ctx, refined, "cctfrm.dec", c.decoder_plan.size(), c.dropout);
  if (taps) {
    taps->bottleneck = refined;
    taps->cascade = cascade;
  }
  return reverse_feature_harmonization(ctx, cascade, raw_image, "cctfrm.harm");
}

}  // namespace xflood
