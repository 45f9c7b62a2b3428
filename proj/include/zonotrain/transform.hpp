#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "zonotrain/domains.hpp"
#include "zonotrain/subgraph.hpp"

namespace zonotrain {

/// Pop discipline of the worklist. The result does not depend on it.
enum class FrontOrder : std::uint8_t { Stack, Queue };

/// 𝒯: tensor → abstract element, or nullopt for tensors that carry no
/// abstract information. Tensors without an entry are untransformed.
using TransformMap = std::map<TensorId, std::optional<SymElement>>;

struct TransformResult {
  std::vector<std::optional<SymElement>> outputs;
  TransformMap map;
  std::size_t firings = 0;
};

/// Worklist pass that appends the abstract transformer of every op on an
/// input-to-output path to `g`. Member inputs that are absent from 𝒯 or map
/// to nullopt are passed to transformers as the graph's own tensors.
inline TransformResult transform(Graph& g, const std::vector<TensorId>& xs, const std::vector<SymElement>& d0,
                                 const std::vector<TensorId>& zs, FrontOrder order = FrontOrder::Stack) {
  if (xs.size() != d0.size()) throw ContractError("transform: one initial element per input is required");
  const SubgraphIndex S = extract_subgraph(g, xs, zs);
  Builder B(g);

  TransformResult r;
  std::deque<TensorId> front;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (g.shape(d0[i].c) != g.shape(xs[i])) {
      throw DimensionError("initial element shape " + to_string(g.shape(d0[i].c)) + " does not match input " +
                           to_string(g.shape(xs[i])));
    }
    r.map[xs[i]] = d0[i];
    front.push_back(xs[i]);
  }

  std::set<NodeId> fired;
  const std::size_t limit = S.outputs_of.size();
  while (!front.empty()) {
    TensorId y;
    if (order == FrontOrder::Stack) {
      y = front.back();
      front.pop_back();
    } else {
      y = front.front();
      front.pop_front();
    }
    auto cit = S.consumers.find(y);
    if (cit == S.consumers.end()) continue;
    for (NodeId nid : cit->second) {
      if (fired.count(nid)) continue;
      const OpNode op = g.node(nid);  // copy: transformers append to g
      bool ready = true;
      for (auto in : op.inputs) {
        if (S.members.count(in) && !r.map.count(in)) {
          ready = false;  // wait for the other member inputs
          break;
        }
      }
      if (!ready) continue;

      std::vector<SymOperand> operands;
      bool any_abstract = false;
      for (auto in : op.inputs) {
        auto it = r.map.find(in);
        if (it != r.map.end() && it->second) {
          operands.emplace_back(*it->second);
          any_abstract = true;
        } else {
          operands.emplace_back(in);
        }
      }
      std::optional<SymElement> result;
      if (any_abstract) result = sym::transform_op(B, op.kind, operands, op.attrs);

      fired.insert(nid);
      if (++r.firings > limit) throw StructureError("transform: an op fired more than once");
      for (auto out : S.outputs_of.at(nid)) {
        r.map.emplace(out, result);
        front.push_back(out);
      }
    }
  }

  for (auto z : zs) {
    auto it = r.map.find(z);
    if (it == r.map.end()) throw StructureError("transform: output tensor " + std::to_string(z.value) + " was not reached");
    r.outputs.push_back(it->second);
  }
  return r;
}

inline std::optional<SymElement> transform(Graph& g, TensorId x, const SymElement& d0, TensorId z,
                                           FrontOrder order = FrontOrder::Stack) {
  return transform(g, std::vector<TensorId>{x}, std::vector<SymElement>{d0}, std::vector<TensorId>{z}, order).outputs[0];
}

/// Concrete form: transforms `d0` at input `x` through a copy of `model` and
/// evaluates the resulting elements. The input itself is bound to d0's
/// center so untransformed tensors that depend on it get concrete values;
/// other graph inputs must be supplied in `feeds`.
inline std::vector<std::optional<Element>> transform_eager(const Graph& model, TensorId x, const Element& d0,
                                                          const std::vector<TensorId>& zs, const Weights& weights,
                                                          Feeds feeds = {}, FrontOrder order = FrontOrder::Stack) {
  Graph g = model;
  validate(d0);
  SymElement s{d0.domain, g.add_input("__d0_c", d0.c.shape()), g.add_input("__d0_b", d0.b.shape()), std::nullopt,
               d0.origin};
  feeds[s.c] = d0.c;
  feeds[s.b] = d0.b;
  if (d0.E) {
    s.E = g.add_input("__d0_E", d0.E->shape());
    feeds[*s.E] = *d0.E;
  }
  if (g.info(x).role == TensorRole::Input && !feeds.count(x)) feeds[x] = d0.c;

  const auto res = transform(g, {x}, {s}, zs, order);
  std::vector<TensorId> targets;
  for (const auto& o : res.outputs) {
    if (!o) continue;
    targets.push_back(o->c);
    targets.push_back(o->b);
    if (o->E) targets.push_back(*o->E);
  }
  std::vector<std::optional<Element>> out;
  if (targets.empty()) {
    out.resize(res.outputs.size());
    return out;
  }
  const Tape tape = forward(g, targets, feeds, weights);
  for (const auto& o : res.outputs) {
    if (!o) {
      out.emplace_back(std::nullopt);
      continue;
    }
    Element d{o->domain, tape.value(o->c), tape.value(o->b), std::nullopt, o->origin};
    if (o->E) d.E = tape.value(*o->E);
    validate(d);
    out.emplace_back(std::move(d));
  }
  return out;
}

}  // namespace zonotrain
