#pragma once

#include <map>
#include <variant>
#include <vector>

#include "zonotrain/activations.hpp"
#include "zonotrain/autodiff.hpp"

namespace zonotrain {

/// An op input during transformation: an abstract element or a plain tensor.
using SymOperand = std::variant<SymElement, TensorId>;
using Operand = std::variant<Element, Tensor>;

namespace sym {

namespace detail {

inline bool is_abstract(const SymOperand& o) { return std::holds_alternative<SymElement>(o); }
inline const SymElement& elem(const SymOperand& o) { return std::get<SymElement>(o); }
inline TensorId plain(const SymOperand& o) { return std::get<TensorId>(o); }

[[noreturn]] inline void unsupported(OpKind k, Domain d, const std::string& why) {
  throw UnsupportedOpError(std::string(name_of(k)), std::string(name_of(d)) + (why.empty() ? "" : ": " + why));
}

inline Shape with_leading(std::size_t e, const Shape& s) {
  Shape out = s;
  out.insert(out.begin(), e);
  return out;
}

/// Reshapes E from [e, ...c] to [e, 1, ..., 1, ...c] so that it broadcasts
/// against a tensor of rank `out_rank` the same way c does.
inline TensorId lift_generators(Builder& B, TensorId E, std::size_t out_rank) {
  const Shape& es = B.shape(E);
  const std::size_t c_rank = es.size() - 1;
  if (out_rank <= c_rank) return E;
  Shape s{es[0]};
  for (std::size_t i = c_rank; i < out_rank; ++i) s.push_back(1);
  s.insert(s.end(), es.begin() + 1, es.end());
  return B.reshape(E, s);
}

/// Broadcasts b and E of `d` up to `shape` (the op's output shape).
inline SymElement broadcast_element(Builder& B, const SymElement& d, const Shape& shape) {
  if (B.shape(d.c) == shape) return d;
  const TensorId z = B.zeros(shape);
  SymElement out{d.domain, B.add(d.c, z), B.add(d.b, z), std::nullopt, d.origin};
  if (d.E) out.E = B.add(lift_generators(B, *d.E, shape.size()), z);
  return out;
}

/// Applies a linear single-input op to every generator by folding the
/// generator axis into the leading (batch) axis.
template <class F>
TensorId fold_generators(Builder& B, TensorId E, F op) {
  Shape es = B.shape(E);
  Shape folded(es.begin() + 1, es.end());
  if (folded.empty()) throw DimensionError("cannot fold generators of a scalar element");
  folded[0] *= es[0];
  const TensorId y = op(B.reshape(E, folded));
  Shape ys = B.shape(y);
  Shape out = ys;
  out[0] = ys[0] / es[0];
  out.insert(out.begin(), es[0]);
  return B.reshape(y, out);
}

inline std::pair<TensorId, TensorId> interval_of(Builder& B, const SymOperand& o) {
  if (is_abstract(o)) return lower_upper(B, elem(o));
  return {plain(o), plain(o)};
}

inline Domain domain_of(const std::vector<SymOperand>& in) {
  std::optional<Domain> d;
  for (const auto& o : in) {
    if (!is_abstract(o)) continue;
    if (d && *d != elem(o).domain) throw ContractError("op mixes Box and HybridZonotope inputs");
    d = elem(o).domain;
  }
  if (!d) throw ContractError("op has no abstract input");
  return *d;
}

inline SymElement as_element(Builder& B, const SymOperand& o, Domain dom) {
  if (is_abstract(o)) return elem(o);
  return point(B, dom, plain(o));
}

/// Interval product [la,ua]·[lb,ub].
inline SymElement interval_mul(Builder& B, Domain dom, std::pair<TensorId, TensorId> a, std::pair<TensorId, TensorId> b) {
  const TensorId p1 = B.mul(a.first, b.first), p2 = B.mul(a.first, b.second);
  const TensorId p3 = B.mul(a.second, b.first), p4 = B.mul(a.second, b.second);
  const TensorId lo = B.minimum(B.minimum(p1, p2), B.minimum(p3, p4));
  const TensorId hi = B.maximum(B.maximum(p1, p2), B.maximum(p3, p4));
  return from_interval(B, dom, lo, hi);
}

/// Scales an element by a plain tensor k (broadcasting).
inline SymElement scale(Builder& B, const SymElement& d, TensorId k) {
  SymElement out{d.domain, B.mul(d.c, k), B.mul(d.b, B.abs(k)), std::nullopt, d.origin};
  if (d.E) out.E = B.mul(lift_generators(B, *d.E, B.rank(out.c)), k);
  if (B.shape(out.b) != B.shape(out.c)) out.b = B.add(out.b, B.zeros_like(out.c));
  return out;
}

inline SymElement translate(Builder& B, const SymElement& d, TensorId t, bool subtract = false) {
  const TensorId c = subtract ? B.sub(d.c, t) : B.add(d.c, t);
  SymElement moved{d.domain, c, d.b, d.E, d.origin};
  return broadcast_element(B, moved, B.shape(c));
}

/// Combines generator stacks of several operands placed side by side by a
/// per-stack op `place(stacks)`, where `stacks[i]` is the i-th operand's
/// stack (or nullopt when that operand has none under this origin). Each
/// distinct origin contributes one block; blocks are concatenated along the
/// generator axis.
template <class Place>
std::optional<std::pair<TensorId, Origin>> merge_generators(Builder& B, const std::vector<SymOperand>& in, Place place) {
  std::vector<Origin> origins;
  for (const auto& o : in) {
    if (is_abstract(o) && elem(o).E && std::find(origins.begin(), origins.end(), elem(o).origin) == origins.end()) {
      origins.push_back(elem(o).origin);
    }
  }
  if (origins.empty()) return std::nullopt;
  std::vector<TensorId> blocks;
  for (Origin og : origins) {
    std::vector<std::optional<TensorId>> stacks;
    for (const auto& o : in) {
      if (is_abstract(o) && elem(o).E && elem(o).origin == og) {
        stacks.push_back(elem(o).E);
      } else {
        stacks.push_back(std::nullopt);
      }
    }
    blocks.push_back(place(stacks));
  }
  if (blocks.size() == 1) return std::make_pair(blocks[0], origins[0]);
  return std::make_pair(B.op(OpKind::ConcatV2, blocks, axis_attrs(0)), fresh_origin());
}

inline std::vector<std::int64_t> shifted(const std::vector<std::int64_t>& v, std::size_t rank) {
  std::vector<std::int64_t> out;
  for (auto a : v) out.push_back(static_cast<std::int64_t>(zonotrain::detail::normalize_axis(a, rank, "axis")) + 1);
  return out;
}

}  // namespace detail

/// Abstract transformer for one op. Returns nullopt for ops whose result
/// carries no abstract information (Shape).
inline std::optional<SymElement> transform_op(Builder& B, OpKind kind, const std::vector<SymOperand>& in,
                                              const Attrs& attrs) {
  using namespace detail;
  const Domain dom = domain_of(in);
  const bool hz = dom == Domain::HybridZonotope;
  auto abstract_at = [&](std::size_t i) { return is_abstract(in.at(i)); };

  switch (kind) {
    case OpKind::Shape:
      return std::nullopt;

    case OpKind::OnesLike:
    case OpKind::ZerosLike:
      return point(B, dom, B.op(kind, {elem(in[0]).c}));

    case OpKind::Neg:
      return negate(B, elem(in[0]));

    case OpKind::Relu:
    case OpKind::Sigmoid:
    case OpKind::Exp:
    case OpKind::Log:
    case OpKind::Log1p:
    case OpKind::Abs:
      return lift_activation(B, kind, elem(in[0]));

    case OpKind::Add:
    case OpKind::BiasAdd:
    case OpKind::Sub: {
      const bool sub = kind == OpKind::Sub;
      if (abstract_at(0) && abstract_at(1)) {
        const SymElement rhs = sub ? negate(B, elem(in[1])) : elem(in[1]);
        if (dom == Domain::Box) {
          SymElement out{dom, B.op(kind, {elem(in[0]).c, elem(in[1]).c}), B.add(elem(in[0]).b, elem(in[1]).b),
                         std::nullopt, 0};
          return out;
        }
        return add(B, elem(in[0]), rhs);
      }
      if (abstract_at(0)) {
        if (kind == OpKind::BiasAdd) {
          const SymElement& d = elem(in[0]);
          return SymElement{dom, B.op(OpKind::BiasAdd, {d.c, plain(in[1])}), d.b, d.E, d.origin};
        }
        return translate(B, elem(in[0]), plain(in[1]), sub);
      }
      const SymElement moved = sub ? negate(B, elem(in[1])) : elem(in[1]);
      return translate(B, moved, plain(in[0]));
    }

    case OpKind::Mul: {
      if (abstract_at(0) && abstract_at(1)) {
        return interval_mul(B, dom, interval_of(B, in[0]), interval_of(B, in[1]));
      }
      return abstract_at(0) ? scale(B, elem(in[0]), plain(in[1])) : scale(B, elem(in[1]), plain(in[0]));
    }

    case OpKind::RealDiv: {
      if (!abstract_at(1)) {
        return scale(B, elem(in[0]), B.div(B.ones_like(plain(in[1])), plain(in[1])));
      }
      // 1/x over [l, u] not containing 0 is [1/u, 1/l]. The reciprocal is
      // unbounded when the interval reaches 0, so Log(l·u) is folded in with
      // weight zero: evaluation raises DomainError for such a denominator.
      auto [l, u] = interval_of(B, in[1]);
      const TensorId one = B.scalar(1.0);
      const TensorId guard = B.mul(B.log(B.mul(l, u)), 0.0);
      const std::pair<TensorId, TensorId> recip{B.add(B.div(one, u), guard), B.div(one, l)};
      if (!abstract_at(0)) {
        return interval_mul(B, dom, {plain(in[0]), plain(in[0])}, recip);
      }
      return interval_mul(B, dom, interval_of(B, in[0]), recip);
    }

    case OpKind::Maximum:
    case OpKind::Minimum: {
      const bool mx = kind == OpKind::Maximum;
      if (abstract_at(0) && abstract_at(1)) {
        auto [la, ua] = interval_of(B, in[0]);
        auto [lb, ub] = interval_of(B, in[1]);
        return mx ? from_interval(B, dom, B.maximum(la, lb), B.maximum(ua, ub))
                  : from_interval(B, dom, B.minimum(la, lb), B.minimum(ua, ub));
      }
      const SymElement& d = abstract_at(0) ? elem(in[0]) : elem(in[1]);
      const TensorId t = abstract_at(0) ? plain(in[1]) : plain(in[0]);
      if (mx) {
        // max(x, t) = t + relu(x − t)
        return translate(B, lift_activation(B, OpKind::Relu, translate(B, d, t, true)), t);
      }
      // min(x, t) = t − relu(t − x)
      const SymElement diff = translate(B, negate(B, d), t);
      return translate(B, negate(B, lift_activation(B, OpKind::Relu, diff)), t);
    }

    case OpKind::GreaterEqual: {
      auto [la, ua] = interval_of(B, in[0]);
      auto [lb, ub] = interval_of(B, in[1]);
      return from_interval(B, dom, B.greater_equal(la, ub), B.greater_equal(ua, lb));
    }

    case OpKind::MatMul: {
      if (abstract_at(0) && abstract_at(1)) unsupported(kind, dom, "both inputs abstract");
      if (abstract_at(1)) {
        if (hz) unsupported(kind, dom, "only the first input may be abstract");
        const SymElement& d = elem(in[1]);
        const TensorId a = plain(in[0]);
        return SymElement{dom, B.op(kind, {a, d.c}), B.op(kind, {B.abs(a), d.b}), std::nullopt, 0};
      }
      const SymElement& d = elem(in[0]);
      const TensorId w = plain(in[1]);
      SymElement out{dom, B.op(kind, {d.c, w}), B.op(kind, {d.b, B.abs(w)}), std::nullopt, d.origin};
      if (d.E) out.E = fold_generators(B, *d.E, [&](TensorId x) { return B.op(kind, {x, w}); });
      return out;
    }

    case OpKind::Conv2D: {
      if (abstract_at(1)) unsupported(kind, dom, "the kernel must be a plain tensor");
      const SymElement& d = elem(in[0]);
      const TensorId k = plain(in[1]);
      SymElement out{dom, B.op(kind, {d.c, k}, attrs), B.op(kind, {d.b, B.abs(k)}, attrs), std::nullopt, d.origin};
      if (d.E) out.E = fold_generators(B, *d.E, [&](TensorId x) { return B.op(kind, {x, k}, attrs); });
      return out;
    }

    case OpKind::Mean:
    case OpKind::Sum: {
      const SymElement& d = elem(in[0]);
      SymElement out{dom, B.op(kind, {d.c}, attrs), B.op(kind, {d.b}, attrs), std::nullopt, d.origin};
      if (d.E) {
        Attrs ea = attrs;
        const std::size_t r = B.rank(d.c);
        if (ea.axes.empty()) {
          for (std::size_t i = 0; i < r; ++i) ea.axes.push_back(static_cast<std::int64_t>(i) + 1);
        } else {
          ea.axes = shifted(ea.axes, r);
        }
        out.E = B.op(kind, {*d.E}, ea);
      }
      return out;
    }

    case OpKind::Reshape:
    case OpKind::Transpose:
    case OpKind::StridedSlice: {
      const SymElement& d = elem(in[0]);
      SymElement out{dom, B.op(kind, {d.c}, attrs), B.op(kind, {d.b}, attrs), std::nullopt, d.origin};
      if (d.E) {
        const std::size_t e = B.shape(*d.E)[0];
        if (kind == OpKind::Reshape) {
          out.E = B.reshape(*d.E, with_leading(e, B.shape(out.c)));
        } else if (kind == OpKind::Transpose) {
          std::vector<std::int64_t> perm{0};
          for (auto p : shifted(attrs.perm, B.rank(d.c))) perm.push_back(p);
          out.E = B.op(kind, {*d.E}, perm_attrs(std::move(perm)));
        } else {
          Attrs ea = attrs;
          ea.begin.insert(ea.begin.begin(), 0);
          ea.end.insert(ea.end.begin(), static_cast<std::int64_t>(e));
          if (!ea.strides.empty()) ea.strides.insert(ea.strides.begin(), 1);
          out.E = B.op(kind, {*d.E}, ea);
        }
      }
      return out;
    }

    case OpKind::ConcatV2:
    case OpKind::Pack: {
      if (kind == OpKind::Pack && hz) unsupported(kind, dom, "");
      std::vector<TensorId> cs, bs;
      for (const auto& o : in) {
        const SymElement d = as_element(B, o, dom);
        cs.push_back(d.c);
        bs.push_back(d.b);
      }
      SymElement out{dom, B.op(kind, cs, attrs), B.op(kind, bs, attrs), std::nullopt, 0};
      if (!hz) return out;
      const std::size_t r = B.rank(cs[0]);
      const auto axis = static_cast<std::int64_t>(zonotrain::detail::normalize_axis(attrs.axis, r, "ConcatV2")) + 1;
      auto merged = merge_generators(B, in, [&](const std::vector<std::optional<TensorId>>& stacks) {
        std::size_t e = 0;
        for (const auto& s : stacks) {
          if (s) e = B.shape(*s)[0];
        }
        std::vector<TensorId> parts;
        for (std::size_t i = 0; i < stacks.size(); ++i) {
          parts.push_back(stacks[i] ? *stacks[i] : B.zeros(with_leading(e, B.shape(cs[i]))));
        }
        return B.op(OpKind::ConcatV2, parts, axis_attrs(axis));
      });
      if (merged) {
        out.E = merged->first;
        out.origin = merged->second;
      }
      return out;
    }

    case OpKind::Select: {
      if (abstract_at(0)) unsupported(kind, dom, "the condition must be a plain tensor");
      const TensorId m = plain(in[0]);
      const SymElement a = as_element(B, in[1], dom);
      const SymElement b = as_element(B, in[2], dom);
      SymElement out{dom, B.select(m, a.c, b.c), B.select(m, a.b, b.b), std::nullopt, 0};
      const std::vector<SymOperand> branches{in[1], in[2]};
      auto merged = merge_generators(B, branches, [&](const std::vector<std::optional<TensorId>>& stacks) {
        const TensorId zero = B.scalar(0.0);
        return B.select(m, stacks[0] ? *stacks[0] : zero, stacks[1] ? *stacks[1] : zero);
      });
      if (merged) {
        out.E = merged->first;
        out.origin = merged->second;
      }
      return out;
    }

    case OpKind::MaxPool2: {
      auto [l, u] = interval_of(B, in[0]);
      return from_interval(B, dom, B.op(kind, {l}), B.op(kind, {u}));
    }

    case OpKind::Softmax: {
      // Interval softmax: coordinate i is smallest when it sits at its lower
      // bound and every other logit at its upper bound, and vice versa.
      const SymElement& d = elem(in[0]);
      auto [l, u] = interval_of(B, in[0]);
      const std::int64_t last = static_cast<std::int64_t>(B.rank(d.c)) - 1;
      const TensorId shift = B.mean(d.c, {last}, true);
      const TensorId el = B.exp(B.sub(l, shift));
      const TensorId eu = B.exp(B.sub(u, shift));
      const TensorId sl = B.sum(el, {last}, true);
      const TensorId su = B.sum(eu, {last}, true);
      const TensorId lo = B.div(el, B.add(B.sub(su, eu), el));
      const TensorId hi = B.div(eu, B.add(B.sub(sl, el), eu));
      return from_interval(B, dom, lo, hi);
    }

    case OpKind::SparseSoftmaxCrossEntropy:
      unsupported(kind, dom, "loss op");
  }
  unsupported(kind, dom, "");
}

}  // namespace sym

// ---------------------------------------------------------------------------
// Concrete entry points. Each one builds a small graph around the symbolic
// transformer and evaluates it, so concrete and graph transformers share one
// implementation.

namespace detail {

struct EagerScope {
  Graph g;
  Builder B{g};
  Feeds feeds;

  TensorId feed(const Tensor& t) {
    const TensorId id = g.add_input("", t.shape());
    feeds.emplace(id, t);
    return id;
  }

  SymElement feed(const Element& d) {
    validate(d);
    SymElement s{d.domain, feed(d.c), feed(d.b), std::nullopt, d.origin};
    if (d.E) s.E = feed(*d.E);
    return s;
  }

  Element read(const SymElement& s) {
    std::vector<TensorId> targets{s.c, s.b};
    if (s.E) targets.push_back(*s.E);
    const Tape tape = forward(g, targets, feeds, no_weights());
    Element d{s.domain, tape.value(s.c), tape.value(s.b), std::nullopt, s.origin};
    if (s.E) d.E = tape.value(*s.E);
    validate(d);
    return d;
  }
};

}  // namespace detail

inline std::optional<Element> transform_op(OpKind kind, const std::vector<Operand>& inputs, const Attrs& attrs = {}) {
  detail::EagerScope s;
  std::vector<SymOperand> in;
  for (const auto& o : inputs) {
    if (std::holds_alternative<Element>(o)) {
      in.emplace_back(s.feed(std::get<Element>(o)));
    } else {
      in.emplace_back(s.feed(std::get<Tensor>(o)));
    }
  }
  auto out = sym::transform_op(s.B, kind, in, attrs);
  if (!out) return std::nullopt;
  return s.read(*out);
}

inline Element add_hz(const Element& a, const Element& b) {
  detail::EagerScope s;
  return s.read(sym::add(s.B, s.feed(a), s.feed(b)));
}

inline Element decorrelate(const Element& d) {
  detail::EagerScope s;
  return s.read(sym::decorrelate(s.B, s.feed(d)));
}

inline Element correlate(const Element& d) {
  detail::EagerScope s;
  return s.read(sym::correlate(s.B, s.feed(d)));
}

inline Element lift_activation(OpKind kind, const Element& d) {
  detail::EagerScope s;
  return s.read(sym::lift_activation(s.B, kind, s.feed(d)));
}

}  // namespace zonotrain
