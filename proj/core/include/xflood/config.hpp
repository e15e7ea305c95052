#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "xflood/adamw.hpp"

namespace xflood {

/// Every architectural, training and ablation setting of the model.
/// JSON keys are the field names; the optimizer block lives under "adamw".
struct ModelConfig {
  // Stub encoders and text/image interaction.
  std::size_t vocab_size = 64;
  std::size_t n_t = 8;
  std::size_t d_t = 16;
  std::size_t d_i = 16;
  std::size_t d_se = 64;
  std::size_t h = 4;
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;

  // Raw image extents (3 colour channels).
  std::size_t image_h = 64;
  std::size_t image_w = 64;

  // Convolutional attention branch: the raw image is average-pooled by
  // hcamam_pool before the residual extractor.
  std::size_t hcamam_pool = 8;
  std::size_t hcamam_channels = 12;
  std::size_t hcamam_groups = 3;
  std::size_t hcamam_kernel = 3;

  // Encoder / transformer / decoder refinement branch.
  std::vector<std::size_t> encoder_plan{8, 16, 32, 64};
  std::vector<std::size_t> decoder_plan{64, 32, 16, 8};
  std::size_t transformer_depth = 3;
  std::size_t transformer_heads = 4;

  std::size_t d_fused = 32;
  double dropout = 0.2;

  AdamWConfig adamw;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  double holdout_fraction = 0.2;

  // Ablation toggles.
  bool use_mfim = true;
  bool use_hcamam = true;
  bool use_cctfrm = true;
  bool use_hcgam = true;
  bool use_feeca = true;
  bool use_fmsa = true;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  // Derived sizes.
  std::size_t n_i() const { return grid_h * grid_w; }
  std::size_t hcamam_h() const { return image_h / hcamam_pool; }
  std::size_t hcamam_w() const { return image_w / hcamam_pool; }
  std::size_t bottleneck_h() const;
  std::size_t bottleneck_w() const;
  std::size_t cascade_channels() const;
  /// Length of the harmonized refinement vector.
  std::size_t d_r() const { return bottleneck_h() * bottleneck_w() * cascade_channels(); }
  /// Input width of the attention-fusion dense layer.
  std::size_t fusion_input_width() const;
  /// Width of the concatenated head input for the enabled branches.
  std::size_t head_input_width() const;
};

ModelConfig config_from_json_text(const std::string& text);
ModelConfig load_config(const std::string& path);
std::string config_to_json_text(const ModelConfig& config);

}  // namespace xflood
