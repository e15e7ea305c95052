#include "xflood/graph.hpp"

#include "xflood/errors.hpp"

namespace xflood {

const Tensor& Var::value() const { return graph_->node(id_).value; }

Var Graph::constant(Tensor value) {
  Node n;
  n.tag = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  Node n;
  n.tag = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(const ParamStore& store, const std::string& name) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var(this, it->second);
  const ParamEntry& e = store.entry(name);
  Node n;
  n.tag = "param";
  n.value = e.value;
  n.requires_grad = e.trainable;
  n.param_name = name;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string tag, std::span<const Var> inputs, Tensor value, BackwardFn backward,
                  std::vector<Tensor> saved) {
  Node n;
  n.tag = std::move(tag);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.graph() != this) throw ContractError("op '" + n.tag + "' mixes nodes of different graphs");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  n.value = std::move(value);
  n.backward = std::move(backward);
  n.saved = std::move(saved);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var loss, ParamStore* params) {
  if (loss.shape().numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + loss.shape().str());
  }
  backward(loss, Tensor(loss.shape(), 1.0), params);
}

void Graph::backward(Var output, const Tensor& seed, ParamStore* params) {
  if (seed.shape() != output.shape()) {
    throw DimensionError("backward seed " + seed.shape().str() + " does not match output " +
                         output.shape().str());
  }
  clear_grads();
  nodes_[output.id()].grad = seed;

  std::vector<Tensor*> input_grads;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.requires_grad || !n.backward) continue;
    input_grads.clear();
    for (NodeId in : n.inputs) {
      Node& src = nodes_[in];
      if (!src.requires_grad) {
        input_grads.push_back(nullptr);
        continue;
      }
      if (src.grad.empty()) src.grad = Tensor::zeros_like(src.value);
      input_grads.push_back(&src.grad);
    }
    n.backward(*this, n, input_grads);
  }

  if (params == nullptr) return;
  for (const auto& [name, id] : param_nodes_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    params->entry(name).grad += n.grad;
  }
}

void Graph::clear_grads() {
  for (Node& n : nodes_) n.grad = Tensor();
}

}  // namespace xflood
