#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xflood/cctfrm.hpp"
#include "xflood/config.hpp"
#include "xflood/layers.hpp"
#include "xflood/synthetic.hpp"

namespace xflood {

/// Stacked model inputs for one mini-batch. The stub encoders run here, outside
/// any graph, because they carry no trainable state.
struct Batch {
  Tensor images;   ///< B x H x W x 3
  Tensor pooled;   ///< B x (H / pool) x (W / pool) x 3
  Tensor text;     ///< B x n_t x d_t
  Tensor grid;     ///< B x grid_h x grid_w x d_i
  Tensor globals;  ///< B x (d_t + d_i)
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct ModelOutputs {
  Var logits;  ///< B x 1
  Var probs;   ///< B x 1
  CctfrmTaps cctfrm;
};

class XFloodNet {
 public:
  /// Validates the config and registers every parameter, seeded by config.seed.
  explicit XFloodNet(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Replaces every parameter with the entries of `loaded`. Names, shapes and
  /// buffer flags must match exactly; throws ConfigError otherwise.
  void load_params(const ParamStore& loaded);

  Batch make_batch(std::span<const SyntheticSample> data, std::span<const std::size_t> indices) const;
  Batch make_batch(std::span<const SyntheticSample> data) const;

  ModelOutputs forward(const Context& ctx, const Batch& batch) const;

  const Tensor& text_table() const { return text_table_; }
  const Tensor& image_map() const { return image_map_; }

 private:
  ModelConfig config_;
  ParamStore params_;
  Tensor text_table_;
  Tensor image_map_;
};

/// Registers the parameters of every enabled branch and the head.
void register_model(ParamStore& store, const ModelConfig& config);

}  // namespace xflood
