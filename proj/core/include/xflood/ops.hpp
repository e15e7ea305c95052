#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xflood/graph.hpp"
#include "xflood/rng.hpp"
#include "xflood/tensor.hpp"

// Differentiable operators. Every function records one node on the graph owning
// its inputs and never modifies an input value.
//
// Spatial operators accept H x W x C maps or N x H x W x C batches; a rank-3
// input is treated as a batch of one and the output keeps the input's rank.

namespace xflood {

// ---- element-wise, numpy-style broadcasting (right-aligned, extents equal or 1)

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

// ---- activations

enum class Activation { kSigmoid, kRelu, kTanh, kSoftmax };

Var sigmoid(Var x);
Var relu(Var x);
Var tanh(Var x);
/// Softmax along the last axis, max-subtracted.
Var softmax(Var x);
Var activation(Var x, Activation kind);

inline constexpr double kNormEpsilon = 1e-5;

/// (x - mean) / sqrt(var + 1e-5) along the last axis, population variance, no affine.
Var layer_norm(Var x);

// ---- shape manipulation

Var reshape(Var x, Shape shape);
/// Rank-2 transpose.
Var transpose(Var x);
/// General axis permutation: output axis i is input axis perm[i].
Var permute(Var x, std::vector<std::size_t> perm);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length);
/// Stacks equally shaped tensors along a new leading axis.
Var stack(std::span<const Var> parts);
/// Splits along axis 0, dropping that axis (rank-1 inputs keep a [1] shape).
std::vector<Var> unstack(Var x);

// ---- reductions and dense algebra

/// Sum of all elements, shape [1].
Var sum(Var x);
/// Mean over rows of an n x d matrix, shape 1 x d.
Var mean_rows(Var x);
/// m x k times k x n. Throws DimensionError naming both shapes on mismatch.
Var matmul(Var a, Var b);
/// Per-batch product of B x m x k and B x k x n (B x n x k when transpose_b).
Var batched_matmul(Var a, Var b, bool transpose_b = false);
/// x * W + b with b broadcast over rows.
Var linear(Var x, Var weight, Var bias);

// ---- spatial

/// Grouped cross-correlation with zero "same" padding.
/// Kernel layout: KH x KW x (C_in / groups) x C_out, odd KH and KW.
Var conv2d(Var input, Var kernel, std::size_t groups = 1);

/// 2x2 max pooling, stride 2. Odd extents are padded by replicating the last
/// row/column. Gradients route to the (first) arg-max of each window.
Var max_pool2(Var input);

/// Mean over H and W: H x W x C -> 1 x 1 x C (or N x 1 x 1 x C).
Var global_avg_pool(Var input);

/// Nearest-neighbour 2x upsampling.
Var upsample_nearest2(Var input);

/// Nearest-neighbour resampling to out_h x out_w; source index floor((i + 0.5) * in / out).
Var resize_nearest(Var input, std::size_t out_h, std::size_t out_w);

/// Per-channel |DFT2(x)| over the spatial axes. Arbitrary extents.
/// The gradient of |z| is taken as 0 where |z| == 0.
Var fft2d_magnitude(Var input);

// ---- normalization and regularization

enum class Mode { kTrain, kEval };

struct BatchNormState {
  Tensor* running_mean = nullptr;  ///< length C
  Tensor* running_var = nullptr;   ///< length C
  double momentum = 0.9;           ///< running = momentum * running + (1 - momentum) * batch
  bool update = true;
};

/// Normalizes over every axis except the last (channel) one.
/// Train mode uses the statistics of `input`; eval mode uses the running ones.
/// `gamma` and `beta` have shape [C].
Var batch_norm(Var input, Var gamma, Var beta, Mode mode, BatchNormState state);

/// Inverted dropout. Identity in eval mode or when rate == 0.
Var dropout(Var input, double rate, Mode mode, Rng& rng);

// ---- loss

inline constexpr double kProbabilityClip = 1e-7;

/// Mean binary cross-entropy of probabilities (any shape, one entry per label).
/// Probabilities are clipped to [1e-7, 1 - 1e-7]; the clip has zero gradient.
Var bce_loss(Var probs, std::span<const int> labels);

}  // namespace xflood
