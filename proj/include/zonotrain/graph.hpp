#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "zonotrain/kernels.hpp"

namespace zonotrain {

struct TensorId {
  std::uint32_t value = UINT32_MAX;
  auto operator<=>(const TensorId&) const = default;
  bool valid() const noexcept { return value != UINT32_MAX; }
};

struct NodeId {
  std::uint32_t value = UINT32_MAX;
  auto operator<=>(const NodeId&) const = default;
};

enum class TensorRole : std::uint8_t { Input, Constant, Variable, OpOutput };

struct TensorInfo {
  Shape shape;
  TensorRole role = TensorRole::Input;
  std::string name;
  std::optional<Tensor> value;  // constants only
  std::size_t slot = 0;         // variables only: index into the weight vector
  std::optional<NodeId> producer;
};

struct OpNode {
  OpKind kind{};
  std::vector<TensorId> inputs;
  std::vector<TensorId> outputs;
  Attrs attrs;
};

}  // namespace zonotrain

template <>
struct std::hash<zonotrain::TensorId> {
  std::size_t operator()(const zonotrain::TensorId& t) const noexcept { return std::hash<std::uint32_t>{}(t.value); }
};
template <>
struct std::hash<zonotrain::NodeId> {
  std::size_t operator()(const zonotrain::NodeId& t) const noexcept { return std::hash<std::uint32_t>{}(t.value); }
};

namespace zonotrain {

/// Append-only DAG of ops over tensor ids. Every op has exactly one output
/// in practice; the node record keeps a list so the transformation pass can
/// treat multi-output ops uniformly.
class Graph {
 public:
  TensorId add_input(std::string name, Shape shape) {
    TensorId id = push({std::move(shape), TensorRole::Input, std::move(name), std::nullopt, 0, std::nullopt});
    inputs_.push_back(id);
    return id;
  }

  TensorId add_constant(Tensor value, std::string name = {}) {
    Shape s = value.shape();
    require_finite(value, "constant " + name);
    return push({std::move(s), TensorRole::Constant, std::move(name), std::move(value), 0, std::nullopt});
  }

  TensorId add_constant(double v) { return add_constant(Tensor::scalar(v)); }

  TensorId add_variable(std::string name, Shape shape) {
    TensorId id = push({std::move(shape), TensorRole::Variable, std::move(name), std::nullopt, variables_.size(), std::nullopt});
    variables_.push_back(id);
    return id;
  }

  TensorId add_op(OpKind kind, std::vector<TensorId> inputs, Attrs attrs = {}, std::string name = {}) {
    std::vector<Shape> shapes;
    shapes.reserve(inputs.size());
    for (auto id : inputs) shapes.push_back(info(id).shape);
    Shape out = infer_shape(kind, shapes, attrs);
    const NodeId nid{static_cast<std::uint32_t>(nodes_.size())};
    TensorId tid = push({std::move(out), TensorRole::OpOutput, std::move(name), std::nullopt, 0, nid});
    nodes_.push_back(OpNode{kind, std::move(inputs), {tid}, std::move(attrs)});
    return tid;
  }

  void mark_output(TensorId id) {
    info(id);
    outputs_.push_back(id);
  }

  const TensorInfo& info(TensorId id) const {
    if (id.value >= tensors_.size()) throw StructureError("dangling tensor id " + std::to_string(id.value));
    return tensors_[id.value];
  }
  const Shape& shape(TensorId id) const { return info(id).shape; }
  const OpNode& node(NodeId id) const {
    if (id.value >= nodes_.size()) throw StructureError("dangling node id " + std::to_string(id.value));
    return nodes_[id.value];
  }

  std::size_t tensor_count() const noexcept { return tensors_.size(); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  const std::vector<OpNode>& nodes() const noexcept { return nodes_; }
  const std::vector<TensorInfo>& tensors() const noexcept { return tensors_; }
  const std::vector<TensorId>& inputs() const noexcept { return inputs_; }
  const std::vector<TensorId>& outputs() const noexcept { return outputs_; }
  const std::vector<TensorId>& variables() const noexcept { return variables_; }

  std::optional<TensorId> find(std::string_view name) const {
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      if (tensors_[i].name == name) return TensorId{static_cast<std::uint32_t>(i)};
    }
    return std::nullopt;
  }

  /// Checks the structural invariants: ids in range, arity, single producer,
  /// shapes consistent with inference, and acyclicity.
  void validate() const {
    std::vector<int> produced(tensors_.size(), 0);
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      const auto& op = nodes_[n];
      std::vector<Shape> shapes;
      for (auto id : op.inputs) shapes.push_back(info(id).shape);
      const Arity ar = arity_of(op.kind);
      if (op.inputs.size() < ar.min || op.inputs.size() > ar.max) {
        throw StructureError("node " + std::to_string(n) + " (" + std::string(name_of(op.kind)) + ") has wrong arity");
      }
      const Shape expect = infer_shape(op.kind, shapes, op.attrs);
      for (auto out : op.outputs) {
        const auto& ti = info(out);
        if (ti.role != TensorRole::OpOutput || !ti.producer || ti.producer->value != n) {
          throw StructureError("tensor " + std::to_string(out.value) + " has inconsistent producer");
        }
        if (ti.shape != expect) throw StructureError("tensor " + std::to_string(out.value) + " has stale shape");
        ++produced[out.value];
      }
    }
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      const bool needs = tensors_[i].role == TensorRole::OpOutput;
      if (needs != (produced[i] == 1)) throw StructureError("tensor " + std::to_string(i) + " producer count mismatch");
    }
    topological_order();
  }

  /// Kahn's algorithm; ties broken by node index so the order is stable.
  std::vector<NodeId> topological_order() const {
    std::vector<std::size_t> pending(nodes_.size(), 0);
    std::vector<std::vector<std::size_t>> consumers(tensors_.size());
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      for (auto in : nodes_[n].inputs) {
        const auto& ti = info(in);
        if (ti.producer) {
          ++pending[n];
          consumers[in.value].push_back(n);
        }
      }
    }
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      if (pending[n] == 0) ready.push(n);
    }
    std::vector<NodeId> order;
    order.reserve(nodes_.size());
    while (!ready.empty()) {
      const std::size_t n = ready.top();
      ready.pop();
      order.push_back(NodeId{static_cast<std::uint32_t>(n)});
      for (auto out : nodes_[n].outputs) {
        for (auto c : consumers[out.value]) {
          if (--pending[c] == 0) ready.push(c);
        }
      }
    }
    if (order.size() != nodes_.size()) throw StructureError("graph contains a cycle");
    return order;
  }

  /// Copy of the graph with every input's leading (batch) extent replaced by
  /// `n` and all op shapes re-inferred. Constants are untouched, so batch-
  /// dependent constants make this throw.
  Graph rebatched(std::size_t n) const {
    Graph g = *this;
    for (auto id : g.inputs_) {
      auto& s = g.tensors_[id.value].shape;
      if (s.empty()) throw DimensionError("rebatched: scalar input has no batch axis");
      s[0] = n;
    }
    for (auto nid : g.topological_order()) {
      const auto& op = g.nodes_[nid.value];
      std::vector<Shape> shapes;
      for (auto id : op.inputs) shapes.push_back(g.tensors_[id.value].shape);
      g.tensors_[op.outputs[0].value].shape = infer_shape(op.kind, shapes, op.attrs);
    }
    return g;
  }

  bool operator==(const Graph&) const;

  // Raw construction hook for deserialization; validate() afterwards.
  void restore(std::vector<TensorInfo> tensors, std::vector<OpNode> nodes, std::vector<TensorId> inputs,
               std::vector<TensorId> outputs, std::vector<TensorId> variables) {
    tensors_ = std::move(tensors);
    nodes_ = std::move(nodes);
    inputs_ = std::move(inputs);
    outputs_ = std::move(outputs);
    variables_ = std::move(variables);
  }

 private:
  TensorId push(TensorInfo ti) {
    tensors_.push_back(std::move(ti));
    return TensorId{static_cast<std::uint32_t>(tensors_.size() - 1)};
  }

  std::vector<TensorInfo> tensors_;
  std::vector<OpNode> nodes_;
  std::vector<TensorId> inputs_;
  std::vector<TensorId> outputs_;
  std::vector<TensorId> variables_;
};

inline bool operator==(const TensorInfo& a, const TensorInfo& b) {
  return a.shape == b.shape && a.role == b.role && a.name == b.name && a.value == b.value && a.slot == b.slot &&
         a.producer == b.producer;
}

inline bool operator==(const OpNode& a, const OpNode& b) {
  return a.kind == b.kind && a.inputs == b.inputs && a.outputs == b.outputs && a.attrs == b.attrs;
}

inline bool Graph::operator==(const Graph& o) const {
  return tensors_ == o.tensors_ && nodes_ == o.nodes_ && inputs_ == o.inputs_ && outputs_ == o.outputs_ &&
         variables_ == o.variables_;
}

}  // namespace zonotrain
