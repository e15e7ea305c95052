#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xflood/params.hpp"
#include "xflood/tensor.hpp"

namespace xflood {

class Graph;
struct Node;

using NodeId = std::size_t;

/// Accumulates d(loss)/d(input_i) into *input_grads[i]. Entries are null for inputs
/// that do not require a gradient. The same pointer may appear twice when an op
/// consumes one node twice.
using BackwardFn = std::function<void(const Graph&, const Node&, std::span<Tensor* const> input_grads)>;

struct Node {
  std::string tag;
  std::vector<NodeId> inputs;
  Tensor value;
  Tensor grad;
  BackwardFn backward;
  std::vector<Tensor> saved;
  bool requires_grad = false;
  std::string param_name;
};

/// Handle to a node of a Graph. Cheap to copy; the graph must outlive it.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph& graph() const { return *graph_; }
  NodeId id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

/// Tape of forward operations. Nodes are appended in execution order, so inputs
/// always precede their consumers and reverse insertion order is a valid
/// backward schedule.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);

  /// Leaf that is not a parameter but still receives a gradient.
  Var variable(Tensor value);

  /// Leaf bound to a ParamStore entry. Repeated requests for one name share a node.
  Var param(const ParamStore& store, const std::string& name);

  /// Appends an op node. `requires_grad` is inherited from the inputs.
  Var record(std::string tag, std::span<const Var> inputs, Tensor value, BackwardFn backward,
             std::vector<Tensor> saved = {});

  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Node& node(Var v) const { return nodes_.at(v.id()); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse pass from a scalar (shape [1]) loss. Parameter gradients are added
  /// to the store's accumulators when `params` is given.
  void backward(Var loss, ParamStore* params = nullptr);

  /// Reverse pass seeded with an explicit output gradient.
  void backward(Var output, const Tensor& seed, ParamStore* params = nullptr);

  /// Gradient reached at `v` by the last backward pass (empty if none).
  const Tensor& grad(Var v) const { return nodes_.at(v.id()).grad; }

  void clear_grads();

 private:
  std::deque<Node> nodes_;  // deque: references to values stay valid while recording
  std::unordered_map<std::string, NodeId> param_nodes_;
};

}  // namespace xflood
