#pragma once

#include <map>
#include <set>
#include <vector>

#include "zonotrain/graph.hpp"

namespace zonotrain {

/// Tensors lying on some path from an input to an output, with the two
/// adjacency maps the transformation pass walks: which member ops consume a
/// tensor, and which in-subgraph outputs each such op produces.
struct SubgraphIndex {
  std::set<TensorId> members;
  std::map<TensorId, std::vector<NodeId>> consumers;
  std::map<NodeId, std::vector<TensorId>> outputs_of;
};

namespace detail {

inline std::vector<std::vector<NodeId>> consumer_lists(const Graph& g) {
  std::vector<std::vector<NodeId>> out(g.tensor_count());
  for (std::size_t n = 0; n < g.node_count(); ++n) {
    for (auto in : g.nodes()[n].inputs) {
      auto& list = out[in.value];
      const NodeId nid{static_cast<std::uint32_t>(n)};
      if (list.empty() || list.back() != nid) list.push_back(nid);
    }
  }
  return out;
}

}  // namespace detail

inline SubgraphIndex extract_subgraph(const Graph& g, const std::vector<TensorId>& xs, const std::vector<TensorId>& zs) {
  const auto consumers = detail::consumer_lists(g);
  std::vector<char> fwd(g.tensor_count(), 0), bwd(g.tensor_count(), 0);

  std::vector<TensorId> stack;
  for (auto x : xs) {
    g.info(x);
    if (!fwd[x.value]) stack.push_back(x), fwd[x.value] = 1;
  }
  while (!stack.empty()) {
    const TensorId t = stack.back();
    stack.pop_back();
    for (auto n : consumers[t.value]) {
      for (auto out : g.node(n).outputs) {
        if (!fwd[out.value]) fwd[out.value] = 1, stack.push_back(out);
      }
    }
  }

  // Backtrack from the outputs, never leaving the forward set.
  for (auto z : zs) {
    g.info(z);
    if (!fwd[z.value]) {
      throw ReachabilityError("output tensor " + std::to_string(z.value) + " does not depend on the input");
    }
    if (!bwd[z.value]) bwd[z.value] = 1, stack.push_back(z);
  }
  while (!stack.empty()) {
    const TensorId t = stack.back();
    stack.pop_back();
    const auto& producer = g.info(t).producer;
    if (!producer) continue;
    for (auto in : g.node(*producer).inputs) {
      if (fwd[in.value] && !bwd[in.value]) bwd[in.value] = 1, stack.push_back(in);
    }
  }

  SubgraphIndex idx;
  for (std::size_t i = 0; i < g.tensor_count(); ++i) {
    if (fwd[i] && bwd[i]) idx.members.insert(TensorId{static_cast<std::uint32_t>(i)});
  }
  for (auto t : idx.members) {
    for (auto n : consumers[t.value]) {
      std::vector<TensorId> outs;
      for (auto out : g.node(n).outputs) {
        if (idx.members.count(out)) outs.push_back(out);
      }
      if (outs.empty()) continue;
      idx.consumers[t].push_back(n);
      idx.outputs_of[n] = std::move(outs);
    }
  }
  return idx;
}

inline SubgraphIndex extract_subgraph(const Graph& g, TensorId x, TensorId z) {
  return extract_subgraph(g, std::vector<TensorId>{x}, std::vector<TensorId>{z});
}

}  // namespace zonotrain
