#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xflood/config.hpp"
#include "xflood/layers.hpp"

// Refinement branch: gated-convolution encoder, transformer bottleneck,
// cascading decoder and reverse feature harmonization. Maps are B x H x W x C.

namespace xflood {

/// 3x3 gate kernel `<prefix>.kernel` plus batch norm `<prefix>.bn`.
void register_gated_block(ParamStore& store, const std::string& prefix, std::size_t cin, std::size_t cout);

/// [upsample x2] -> conv -> G * sigmoid(G) -> ReLU -> dropout -> batch norm -> 2x2 max pool.
/// `tap`, when given, receives the activation before dropout.
Var gated_block(const Context& ctx, Var x, const std::string& prefix, double dropout_rate, bool upsample_first,
                Var* tap = nullptr);

void register_encoder(ParamStore& store, const std::string& prefix, std::size_t cin,
                      const std::vector<std::size_t>& plan);
/// Chains one downsampling block per plan entry. Throws ConfigError when the
/// spatial extents are not divisible by 2^plan.size().
Var encoder(const Context& ctx, Var x, const std::string& prefix, std::size_t stages, double dropout_rate,
            std::vector<Var>* taps = nullptr);

void register_transformer(ParamStore& store, const std::string& prefix, std::size_t d, std::size_t depth);
/// Adds sinusoidal positions once, then `depth` pre-LN layers (attention and a
/// 2d-wide ReLU feedforward, both residual). x: B x n x d.
Var transformer_encoder(const Context& ctx, Var x, const std::string& prefix, std::size_t depth, std::size_t heads);

void register_decoder(ParamStore& store, const std::string& prefix, std::size_t cin,
                      const std::vector<std::size_t>& plan);
/// Shape-preserving stages; returns the channel concat of every stage output.
Var decoder_cascade(const Context& ctx, Var x, const std::string& prefix, std::size_t stages, double dropout_rate,
                    std::vector<Var>* stage_outputs = nullptr);

void register_harmonizer(ParamStore& store, const std::string& prefix, std::size_t channels);
/// Adapter: nearest resize of the raw image to the cascade extents, 3x3 conv, batch norm.
Var image_adapter(const Context& ctx, Var raw_image, const std::string& prefix, std::size_t out_h, std::size_t out_w);
/// Gated subtraction/scaling fusion of the cascade with the normalized image
/// features, given both already normalized. Returns the map (B x H x W x C).
Var harmonize(const Context& ctx, Var y_norm, Var x_norm, const std::string& prefix);
/// Full harmonization; returns B x (H * W * C).
Var reverse_feature_harmonization(const Context& ctx, Var y_cascade, Var raw_image, const std::string& prefix);

void register_cctfrm(ParamStore& store, const ModelConfig& config);

struct CctfrmTaps {
  std::vector<Var> encoder_activations;
  Var bottleneck;
  Var cascade;
};

/// raw_image: B x H x W x 3. Returns B x d_r.
Var cctfrm_forward(const Context& ctx, const ModelConfig& config, Var raw_image, CctfrmTaps* taps = nullptr);

}  // namespace xflood
