#include "xflood/uffm.hpp"

#include "xflood/errors.hpp"

namespace xflood {

void register_head(ParamStore& store, const std::string& prefix, std::size_t in_width, std::size_t hidden) {
  register_dense(store, prefix + ".hidden", in_width, hidden);
  register_dense(store, prefix + ".out", hidden, 1);
}

Var uffm_logits(const Context& ctx, std::span<const Var> parts, const std::string& prefix) {
  if (parts.empty()) throw ContractError("uffm: no branch outputs to fuse");
  Var fused = parts.size() == 1 ? parts[0] : concat(parts, 1);
  return dense(ctx, relu(dense(ctx, fused, prefix + ".hidden")), prefix + ".out");
}

Var uffm_forward(const Context& ctx, std::span<const Var> parts, const std::string& prefix) {
  return sigmoid(uffm_logits(ctx, parts, prefix));
}

int predict(double probability) { return probability >= 0.5 ? 1 : 0; }

std::vector<int> predict(std::span<const double> probabilities) {
  std::vector<int> out;
  out.reserve(probabilities.size());
  for (double p : probabilities) out.push_back(predict(p));
  return out;
}

}  // namespace xflood
