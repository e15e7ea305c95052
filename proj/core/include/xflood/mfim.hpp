#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xflood/config.hpp"
#include "xflood/layers.hpp"

// Text/image interaction branch: stub encoders, global features, local feature
// preparation, self gating, three-level attention, contextual gating,
// cross-modal attention and joint fusion.

namespace xflood {

// ---- stub encoders (pure functions of input and seed)

/// vocab x d_t table, standard-normal entries scaled by 1/sqrt(d_t).
Tensor stub_text_table(std::uint64_t seed, std::size_t vocab, std::size_t d_t);

/// n_t x d_t: row j is table row tokens[j]. Throws InputError on an empty list,
/// more than 512 tokens or an id outside the vocabulary.
Tensor stub_text_encoder(std::span<const int> tokens, const Tensor& table);

/// Mean of each (H/grid_h) x (W/grid_w) patch: image H x W x C -> grid_h x grid_w x C.
/// Throws InputError when extents are not divisible.
Tensor patch_means(const Tensor& image, std::size_t grid_h, std::size_t grid_w);

/// Fixed 3 x d_i map applied per patch by the stub image encoder.
Tensor stub_image_map(std::uint64_t seed, std::size_t d_i);

/// grid_h x grid_w x d_i region embeddings: patch means times `map`.
Tensor stub_image_encoder(const Tensor& image, std::size_t grid_h, std::size_t grid_w, const Tensor& map);

/// Mean over tokens (d_t) followed by the spatial mean of the grid (d_i).
Tensor global_features(const Tensor& text, const Tensor& grid);

// ---- attention level arithmetic

enum class Granularity { kCoarse, kMedium, kFine };

struct AttentionLevel {
  Granularity level;
  std::size_t heads;
  std::size_t head_dim;
  const char* name() const;
};

/// Coarse (h/2 heads), medium (h) and fine (2h) for width d_se.
/// Throws ConfigError unless h is even and 2h divides d_se.
std::vector<AttentionLevel> attention_levels(std::size_t d_se, std::size_t h);

// ---- differentiable pieces. Sequences are batched: B x n x d.

void register_mfim(ParamStore& store, const ModelConfig& config);

/// Single-layer bidirectional LSTM with zero initial state; gate order i, f, g, o.
/// Weights under `<prefix>.{fwd,bwd}.{wx,wh,b}`. Returns B x n x 2*hidden.
Var bilstm(const Context& ctx, Var x, const std::string& prefix, std::size_t hidden);
void register_bilstm(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden);

/// Output channel counts of the 3/5/7 image branches (near-equal split of d).
std::vector<std::size_t> multiscale_split(std::size_t d);

struct LocalFeatures {
  Var text;   ///< B x n_t x d_se
  Var image;  ///< B x n_i x d_se
};

/// text: B x n_t x d_t, grid: B x grid_h x grid_w x d_i.
LocalFeatures prepare_local_features(const Context& ctx, const ModelConfig& config, Var text, Var grid);

/// x * sigmoid(x W + b) with the dense weights under `prefix`.
Var self_gate(const Context& ctx, Var x, const std::string& prefix);

/// One attention level with weights under `prefix` and scale sqrt(head_dim).
Var attention_level(const Context& ctx, Var x, const AttentionLevel& level, const std::string& prefix);

/// Coarse, then medium, then fine, each consuming the previous output.
Var multi_granularity_attention(const Context& ctx, const ModelConfig& config, Var x, const std::string& prefix);

/// sigmoid(layer_norm(h_raw W + b)) * att.
Var contextual_gating(const Context& ctx, Var att, Var h_raw, const std::string& prefix);

struct CrossModal {
  Var text_to_image;  ///< B x n_t x d_se
  Var image_to_text;  ///< B x n_i x d_se
};

/// Single-head bidirectional cross attention, scale sqrt(d_se).
CrossModal cross_modal_attention(const Context& ctx, Var g_t, Var g_i, const std::string& prefix);

/// Row concat, A * sigmoid(A), sequence mean, dense-ReLU-dense. Returns B x d_se.
Var joint_fusion(const Context& ctx, Var a_t, Var a_i, const std::string& prefix);

/// Whole branch. Returns B x d_se.
Var mfim_forward(const Context& ctx, const ModelConfig& config, Var text, Var grid);

}  // namespace xflood
