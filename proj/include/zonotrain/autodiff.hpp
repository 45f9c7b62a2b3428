#pragma once

#include <optional>
#include <unordered_map>
#include <vector>

#include "zonotrain/graph.hpp"
#include "zonotrain/vjp.hpp"

namespace zonotrain {

/// Trainable values, indexed by variable slot.
using Weights = std::vector<Tensor>;
/// Values bound to graph inputs for one evaluation.
using Feeds = std::unordered_map<TensorId, Tensor>;

/// The nodes needed to compute a set of targets, in topological order.
class ExecutionPlan {
 public:
  ExecutionPlan(const Graph& g, const std::vector<TensorId>& targets) : graph_(&g), targets_(targets) {
    std::vector<char> needed(g.tensor_count(), 0);
    std::vector<TensorId> stack(targets.begin(), targets.end());
    for (auto t : targets) needed[t.value] = 1;
    while (!stack.empty()) {
      const TensorId t = stack.back();
      stack.pop_back();
      const auto& p = g.info(t).producer;
      if (!p) continue;
      for (auto in : g.node(*p).inputs) {
        if (!needed[in.value]) needed[in.value] = 1, stack.push_back(in);
      }
    }
    for (auto n : g.topological_order()) {
      if (needed[g.node(n).outputs[0].value]) order_.push_back(n);
    }
    for (std::size_t i = 0; i < g.tensor_count(); ++i) {
      if (needed[i] && g.tensors()[i].role == TensorRole::Input) required_inputs_.push_back(TensorId{static_cast<std::uint32_t>(i)});
    }
  }

  const Graph& graph() const noexcept { return *graph_; }
  const std::vector<NodeId>& order() const noexcept { return order_; }
  const std::vector<TensorId>& targets() const noexcept { return targets_; }
  const std::vector<TensorId>& required_inputs() const noexcept { return required_inputs_; }

 private:
  const Graph* graph_;
  std::vector<TensorId> targets_;
  std::vector<NodeId> order_;
  std::vector<TensorId> required_inputs_;
};

/// Forward values of one evaluation. Holds pointers into the feeds and
/// weights it was built from, so those must outlive the tape.
class Tape {
 public:
  const Graph& graph() const noexcept { return *graph_; }
  const std::vector<NodeId>& order() const noexcept { return order_; }

  const Tensor& value(TensorId id) const {
    if (id.value >= ptr_.size() || !ptr_[id.value]) {
      throw StructureError("tensor " + std::to_string(id.value) + " was not evaluated");
    }
    return *ptr_[id.value];
  }
  bool has(TensorId id) const noexcept { return id.value < ptr_.size() && ptr_[id.value]; }

 private:
  friend Tape forward(const ExecutionPlan&, const Feeds&, const Weights&);
  const Graph* graph_ = nullptr;
  std::vector<NodeId> order_;
  std::vector<const Tensor*> ptr_;
  std::vector<Tensor> owned_;
};

inline Tape forward(const ExecutionPlan& plan, const Feeds& feeds, const Weights& weights) {
  const Graph& g = plan.graph();
  Tape tape;
  tape.graph_ = &g;
  tape.order_ = plan.order();
  tape.ptr_.assign(g.tensor_count(), nullptr);
  tape.owned_.resize(g.tensor_count());

  auto bind = [&](TensorId id) -> const Tensor* {
    if (tape.ptr_[id.value]) return tape.ptr_[id.value];
    const auto& ti = g.info(id);
    const Tensor* p = nullptr;
    switch (ti.role) {
      case TensorRole::Constant:
        p = &*ti.value;
        break;
      case TensorRole::Variable:
        if (ti.slot >= weights.size()) throw StructureError("no weight bound for variable '" + ti.name + "'");
        p = &weights[ti.slot];
        break;
      case TensorRole::Input: {
        auto it = feeds.find(id);
        if (it == feeds.end()) throw StructureError("no value fed for input '" + ti.name + "'");
        p = &it->second;
        break;
      }
      case TensorRole::OpOutput:
        throw StructureError("tensor " + std::to_string(id.value) + " used before it was computed");
    }
    if (p->shape() != ti.shape) {
      throw DimensionError("value for '" + ti.name + "' has shape " + to_string(p->shape()) + ", graph expects " +
                           to_string(ti.shape));
    }
    tape.ptr_[id.value] = p;
    return p;
  };

  for (auto t : plan.targets()) {
    if (!g.info(t).producer) bind(t);
  }
  std::vector<const Tensor*> args;
  for (auto nid : plan.order()) {
    const auto& op = g.node(nid);
    args.clear();
    for (auto in : op.inputs) args.push_back(bind(in));
    const auto out = op.outputs[0].value;
    tape.owned_[out] = evaluate_op(op.kind, args, op.attrs);
    tape.ptr_[out] = &tape.owned_[out];
  }
  return tape;
}

inline Tape forward(const Graph& g, const std::vector<TensorId>& targets, const Feeds& feeds, const Weights& weights) {
  return forward(ExecutionPlan(g, targets), feeds, weights);
}

// A tape points into its feeds and weights, so binding temporaries would
// leave it dangling. Pass `no_weights()` when the graph has no variables.
Tape forward(const ExecutionPlan&, Feeds&&, const Weights&) = delete;
Tape forward(const ExecutionPlan&, const Feeds&, Weights&&) = delete;
Tape forward(const Graph&, const std::vector<TensorId>&, Feeds&&, const Weights&) = delete;
Tape forward(const Graph&, const std::vector<TensorId>&, const Feeds&, Weights&&) = delete;

inline const Weights& no_weights() {
  static const Weights empty;
  return empty;
}

inline const Feeds& no_feeds() {
  static const Feeds empty;
  return empty;
}

using Gradients = std::unordered_map<TensorId, Tensor>;

/// Reverse sweep over a recorded tape. `wrt` may name variables, inputs or
/// constants; any that the loss does not reach get zero gradients.
inline Gradients backward(const Tape& tape, TensorId loss, const std::vector<TensorId>& wrt) {
  const Graph& g = tape.graph();
  const Tensor& lv = tape.value(loss);
  if (lv.size() != 1) throw ContractError("loss must be scalar, got shape " + to_string(lv.shape()));

  // Only nodes downstream of some wrt tensor carry useful adjoints.
  std::vector<char> live(g.tensor_count(), 0);
  for (auto w : wrt) {
    g.info(w);
    live[w.value] = 1;
  }
  for (auto nid : tape.order()) {
    const auto& op = g.node(nid);
    for (auto in : op.inputs) {
      if (live[in.value]) {
        live[op.outputs[0].value] = 1;
        break;
      }
    }
  }

  std::vector<std::optional<Tensor>> adj(g.tensor_count());
  adj[loss.value] = Tensor(lv.shape(), 1.0);
  std::vector<const Tensor*> args;
  const auto& order = tape.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& op = g.node(*it);
    const auto out = op.outputs[0];
    if (!live[out.value] || !adj[out.value]) continue;
    args.clear();
    for (auto in : op.inputs) args.push_back(&tape.value(in));
    auto grads = vjp(op.kind, args, tape.value(out), *adj[out.value], op.attrs);
    for (std::size_t i = 0; i < op.inputs.size(); ++i) {
      const auto in = op.inputs[i];
      if (!grads[i] || !live[in.value]) continue;
      auto& slot = adj[in.value];
      if (!slot) {
        slot = std::move(*grads[i]);
      } else {
        for (std::size_t k = 0; k < slot->size(); ++k) (*slot)[k] += (*grads[i])[k];
      }
    }
  }

  Gradients out;
  for (auto w : wrt) {
    if (adj[w.value]) {
      out[w] = *adj[w.value];
    } else {
      out[w] = Tensor(g.shape(w), 0.0);
    }
  }
  return out;
}

/// ∂loss/∂p for each p in params.
inline Gradients gradient(const Graph& g, TensorId loss, const std::vector<TensorId>& params, const Feeds& feeds,
                          const Weights& weights) {
  const Tape tape = forward(g, {loss}, feeds, weights);
  return backward(tape, loss, params);
}

}  // namespace zonotrain
