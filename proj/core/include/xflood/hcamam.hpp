#pragma once

#include <cstddef>
#include <string>

#include "xflood/config.hpp"
#include "xflood/layers.hpp"

// Convolutional attention branch: residual extractor, frequency-enhanced
// channel attention, frequency-modulated spatial attention and the fusion
// block. Maps are B x H x W x C.

namespace xflood {

/// Group conv (k x k, `groups`), pre-point 1x1 conv, batch norm, point 1x1 conv
/// and a 1x1 residual projection when cin != cout.
void register_hren(ParamStore& store, const std::string& prefix, std::size_t cin, std::size_t cout,
                   std::size_t groups, std::size_t kernel);
Var hren_forward(const Context& ctx, Var x, const std::string& prefix, std::size_t groups);

void register_feeca(ParamStore& store, const std::string& prefix, std::size_t channels);
Var feeca_forward(const Context& ctx, Var x, const std::string& prefix);

void register_fmsa(ParamStore& store, const std::string& prefix, std::size_t channels);
Var fmsa_forward(const Context& ctx, Var x, const std::string& prefix);

/// Per-channel zero-mean / unit-variance standardization over the spatial axes.
Var spatial_standardize(Var x);

/// Channel concat of `maps`, flatten, append `globals` (B x g), dense + ReLU.
Var attention_fusion(const Context& ctx, std::span<const Var> maps, Var globals, const std::string& prefix);

void register_hcamam(ParamStore& store, const ModelConfig& config);

/// pooled_image: B x h x w x 3, globals: B x (d_t + d_i). Returns B x d_fused.
Var hcamam_forward(const Context& ctx, const ModelConfig& config, Var pooled_image, Var globals);

}  // namespace xflood
