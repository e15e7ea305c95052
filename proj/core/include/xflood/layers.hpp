#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xflood/graph.hpp"
#include "xflood/ops.hpp"
#include "xflood/params.hpp"
#include "xflood/rng.hpp"

namespace xflood {

/// Everything a forward pass needs besides its inputs.
struct Context {
  Graph& graph;
  ParamStore& params;
  Mode mode = Mode::kEval;
  /// Required in train mode when dropout is active.
  Rng* rng = nullptr;
  /// When false, train-mode batch norm leaves running statistics untouched.
  bool update_bn_stats = true;
  /// Optional sink for every attention weight matrix (tests and diagnostics).
  std::vector<Tensor>* attention_probe = nullptr;

  Var p(const std::string& name) const { return graph.param(params, name); }
  Var constant(Tensor t) const { return graph.constant(std::move(t)); }
};

// ---- registration

/// `<prefix>.weight` (in x out, fan-in init) and `<prefix>.bias` (zeros) when `bias`.
void register_dense(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool bias = true);

/// `<prefix>.kernel`: k x k x (cin / groups) x cout.
void register_conv(ParamStore& store, const std::string& prefix, std::size_t k, std::size_t cin, std::size_t cout,
                   std::size_t groups = 1, bool bias = false);

/// `<prefix>.gamma` (ones), `<prefix>.beta` (zeros) plus running-statistics buffers.
void register_batch_norm(ParamStore& store, const std::string& prefix, std::size_t channels);

/// Scalar trainable gain initialised to 1.
void register_gain(ParamStore& store, const std::string& name);

/// W_Q, W_K, W_V, W_O (d x d, no bias) under `<prefix>.{q,k,v,o}`.
void register_attention(ParamStore& store, const std::string& prefix, std::size_t d);

// ---- forward

/// x (rows x in) times `<prefix>.weight` plus optional bias.
Var dense(const Context& ctx, Var x, const std::string& prefix, bool bias = true);

Var conv(const Context& ctx, Var x, const std::string& prefix, std::size_t groups = 1, bool bias = false);

Var batch_norm(const Context& ctx, Var x, const std::string& prefix);

Var dropout(const Context& ctx, Var x, double rate);

/// Scaled dot-product attention over a batch of sequences.
/// q: B x n_q x d, k and v: B x n_k x d. Heads split the feature axis evenly;
/// scores are divided by `scale`. Returns B x n_q x d (heads concatenated, not projected).
Var attention(const Context& ctx, Var q, Var k, Var v, std::size_t heads, double scale);

/// Projected multi-head self/cross attention using the weights under `prefix`:
/// attention(x_q W_Q, x_kv W_K, x_kv W_V) W_O. Inputs are B x n x d.
Var projected_attention(const Context& ctx, Var x_q, Var x_kv, const std::string& prefix, std::size_t heads,
                        double scale);

/// Row-wise matmul of a rank-3 tensor with a rank-2 weight: B x n x d -> B x n x d_out.
Var matmul_rows(Var x, Var weight);

/// Fixed sinusoidal position table, positions x d.
Tensor sinusoidal_positions(std::size_t positions, std::size_t d);

}  // namespace xflood
