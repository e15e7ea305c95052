#include "xflood/model.hpp"

#include <algorithm>

#include "xflood/errors.hpp"
#include "xflood/hcamam.hpp"
#include "xflood/mfim.hpp"
#include "xflood/uffm.hpp"

namespace xflood {

void register_model(ParamStore& store, const ModelConfig& c) {
  if (c.use_mfim) register_mfim(store, c);
  if (c.use_hcamam) register_hcamam(store, c);
  if (c.use_cctfrm) register_cctfrm(store, c);
  register_head(store, "head", c.head_input_width(), c.d_fused);
}

XFloodNet::XFloodNet(ModelConfig config) : config_(std::move(config)), params_(config_.seed) {
  config_.validate();
  register_model(params_, config_);
  text_table_ = stub_text_table(config_.seed, config_.vocab_size, config_.d_t);
  image_map_ = stub_image_map(config_.seed, config_.d_i);
}

void XFloodNet::load_params(const ParamStore& loaded) {
  if (loaded.size() != params_.size()) {
    throw ConfigError("checkpoint has " + std::to_string(loaded.size()) + " entries, model expects " +
                      std::to_string(params_.size()));
  }
  for (const auto& [name, e] : loaded) {
    if (!params_.contains(name)) throw ConfigError("checkpoint entry " + name + " is not a model parameter");
    const ParamEntry& mine = params_.entry(name);
    if (mine.value.shape() != e.value.shape()) {
      throw ConfigError("checkpoint entry " + name + " has shape " + e.value.shape().str() + ", expected " +
                        mine.value.shape().str());
    }
    if (mine.trainable != e.trainable) throw ConfigError("checkpoint entry " + name + " has the wrong buffer flag");
  }
  for (const auto& [name, e] : loaded) params_.put(name, e.value, e.trainable);
}

Batch XFloodNet::make_batch(std::span<const SyntheticSample> data, std::span<const std::size_t> indices) const {
  const ModelConfig& c = config_;
  const std::size_t B = indices.size();
  if (B == 0) throw InputError("empty batch");
  Batch b;
  b.images = Tensor(Shape{B, c.image_h, c.image_w, 3});
  b.pooled = Tensor(Shape{B, c.hcamam_h(), c.hcamam_w(), 3});
  b.text = Tensor(Shape{B, c.n_t, c.d_t});
  b.grid = Tensor(Shape{B, c.grid_h, c.grid_w, c.d_i});
  b.globals = Tensor(Shape{B, c.d_t + c.d_i});
  for (std::size_t k = 0; k < B; ++k) {
    const std::size_t idx = indices[k];
    if (idx >= data.size()) throw InputError("sample index " + std::to_string(idx) + " out of range");
    const SyntheticSample& s = data[idx];
    if (s.image.shape() != Shape{c.image_h, c.image_w, 3}) {
      throw InputError("sample image " + s.image.shape().str() + " does not match the configured image_size");
    }
    if (s.tokens.size() != c.n_t) {
      throw InputError("sample has " + std::to_string(s.tokens.size()) + " tokens, config n_t is " +
                       std::to_string(c.n_t));
    }
    if (s.label != 0 && s.label != 1) throw InputError("label must be 0 or 1");
    const Tensor text = stub_text_encoder(s.tokens, text_table_);
    const Tensor grid = stub_image_encoder(s.image, c.grid_h, c.grid_w, image_map_);
    const Tensor pooled = patch_means(s.image, c.hcamam_h(), c.hcamam_w());
    const Tensor globals = global_features(text, grid);
    std::copy_n(s.image.ptr(), s.image.size(), b.images.ptr() + k * s.image.size());
    std::copy_n(pooled.ptr(), pooled.size(), b.pooled.ptr() + k * pooled.size());
    std::copy_n(text.ptr(), text.size(), b.text.ptr() + k * text.size());
    std::copy_n(grid.ptr(), grid.size(), b.grid.ptr() + k * grid.size());
    std::copy_n(globals.ptr(), globals.size(), b.globals.ptr() + k * globals.size());
    b.labels.push_back(s.label);
  }
  return b;
}

Batch XFloodNet::make_batch(std::span<const SyntheticSample> data) const {
  std::vector<std::size_t> all(data.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(data, all);
}

ModelOutputs XFloodNet::forward(const Context& ctx, const Batch& batch) const {
  const ModelConfig& c = config_;
  ModelOutputs out;
  std::vector<Var> parts;
  if (c.use_hcamam) {
    parts.push_back(hcamam_forward(ctx, c, ctx.constant(batch.pooled), ctx.constant(batch.globals)));
  }
  if (c.use_mfim) parts.push_back(mfim_forward(ctx, c, ctx.constant(batch.text), ctx.constant(batch.grid)));
  if (c.use_cctfrm) parts.push_back(cctfrm_forward(ctx, c, ctx.constant(batch.images), &out.cctfrm));
  out.logits = uffm_logits(ctx, parts, "head");
  out.probs = sigmoid(out.logits);
  return out;
}

}  // namespace xflood
