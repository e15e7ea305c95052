#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "xflood/layers.hpp"

namespace xflood {

/// Hidden dense (in_width -> hidden, ReLU) and output dense (hidden -> 1).
void register_head(ParamStore& store, const std::string& prefix, std::size_t in_width, std::size_t hidden);

/// Concatenates the B x w_i branch vectors and returns pre-sigmoid logits, B x 1.
Var uffm_logits(const Context& ctx, std::span<const Var> parts, const std::string& prefix);

/// sigmoid(uffm_logits(...)).
Var uffm_forward(const Context& ctx, std::span<const Var> parts, const std::string& prefix);

/// 1 iff p >= 0.5.
int predict(double probability);
std::vector<int> predict(std::span<const double> probabilities);

}  // namespace xflood
