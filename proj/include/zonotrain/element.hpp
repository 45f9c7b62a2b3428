#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "zonotrain/builder.hpp"

namespace zonotrain {

enum class Domain : std::uint8_t { Box, HybridZonotope };

inline std::string_view name_of(Domain d) { return d == Domain::Box ? "Box" : "HybridZonotope"; }

inline std::optional<Domain> domain_from_name(std::string_view s) {
  if (s == "Box" || s == "box") return Domain::Box;
  if (s == "HybridZonotope" || s == "HZ" || s == "hz" || s == "hybrid_zonotope") return Domain::HybridZonotope;
  return std::nullopt;
}

/// Identifies the coordinate system of a generator stack. Two stacks with
/// the same origin are indexed by the same noise symbols.
using Origin = std::uint64_t;

inline Origin fresh_origin() {
  static std::atomic<Origin> next{1};
  return next.fetch_add(1);
}

/// ⟨c, b, E⟩ over value type V (a concrete Tensor or a graph TensorId).
/// E, when present, has shape [e, ...shape(c)]; Box elements never carry E.
template <class V>
struct AbstractValue {
  Domain domain = Domain::Box;
  V c{};
  V b{};
  std::optional<V> E;
  Origin origin = 0;
};

using Element = AbstractValue<Tensor>;
using SymElement = AbstractValue<TensorId>;

struct OutputBounds {
  Tensor lower;
  Tensor upper;
};

// ---------------------------------------------------------------------------
// Concrete elements

inline void validate(const Element& d) {
  if (d.c.shape() != d.b.shape()) throw DimensionError("element center and half-width shapes differ");
  require_finite(d.c, "element center");
  require_finite(d.b, "element half-width");
  for (std::size_t i = 0; i < d.b.size(); ++i) {
    if (d.b[i] < 0) throw DomainError("negative half-width " + std::to_string(d.b[i]) + " at flat index " + std::to_string(i));
  }
  if (d.E) {
    if (d.domain == Domain::Box) throw ContractError("Box element carries generators");
    Shape s = d.c.shape();
    s.insert(s.begin(), d.E->shape().empty() ? 0 : d.E->shape()[0]);
    if (d.E->shape() != s) throw DimensionError("generator stack shape " + to_string(d.E->shape()) + " != " + to_string(s));
    require_finite(*d.E, "generators");
  }
}

inline Element make_box(Tensor c, Tensor b) {
  Element d{Domain::Box, std::move(c), std::move(b), std::nullopt, 0};
  validate(d);
  return d;
}

inline Element make_hz(Tensor c, Tensor b, std::optional<Tensor> E = std::nullopt, Origin origin = 0) {
  if (E && E->shape().size() > 0 && E->shape()[0] == 0) E.reset();
  Element d{Domain::HybridZonotope, std::move(c), std::move(b), std::move(E), 0};
  if (d.E) d.origin = origin ? origin : fresh_origin();
  validate(d);
  return d;
}

inline std::size_t generator_count(const Element& d) { return d.E ? d.E->shape()[0] : 0; }

/// Interval hull: c ∓ (b + Σ_k |E_k|).
inline OutputBounds bounds(const Element& d) {
  Tensor w = d.b;
  if (d.E) {
    const std::size_t p = d.c.size();
    const std::size_t e = generator_count(d);
    for (std::size_t k = 0; k < e; ++k) {
      for (std::size_t i = 0; i < p; ++i) w[i] += std::abs((*d.E)[k * p + i]);
    }
  }
  OutputBounds out{d.c, d.c};
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.lower[i] -= w[i];
    out.upper[i] += w[i];
  }
  return out;
}

/// Moves generators whose entries are all below `threshold` in magnitude
/// into the half-width term. Bounds are unchanged.
inline Element prune_generators(const Element& d, double threshold = 1e-12) {
  if (!d.E) return d;
  const std::size_t p = d.c.size();
  const std::size_t e = generator_count(d);
  Tensor b = d.b;
  std::vector<double> kept;
  std::size_t kept_count = 0;
  for (std::size_t k = 0; k < e; ++k) {
    const double* row = d.E->data().data() + k * p;
    double m = 0;
    for (std::size_t i = 0; i < p; ++i) m = std::max(m, std::abs(row[i]));
    if (m < threshold) {
      for (std::size_t i = 0; i < p; ++i) b[i] += std::abs(row[i]);
    } else {
      kept.insert(kept.end(), row, row + p);
      ++kept_count;
    }
  }
  if (kept_count == e) return d;
  Shape s = d.c.shape();
  s.insert(s.begin(), kept_count);
  Element out = d;
  out.b = std::move(b);
  if (kept_count == 0) {
    out.E.reset();
  } else {
    out.E = Tensor(s, std::move(kept));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Symbolic helpers shared by every transformer

namespace sym {

/// Per-coordinate half-width of the interval hull.
inline TensorId radius(Builder& B, const SymElement& d) {
  if (!d.E) return d.b;
  return B.add(d.b, B.sum(B.abs(*d.E), {0}));
}

inline std::pair<TensorId, TensorId> lower_upper(Builder& B, const SymElement& d) {
  const TensorId r = radius(B, d);
  return {B.sub(d.c, r), B.add(d.c, r)};
}

/// Element with no generators spanning [l, u].
inline SymElement from_interval(Builder& B, Domain dom, TensorId l, TensorId u) {
  return SymElement{dom, B.mul(B.add(l, u), 0.5), B.mul(B.sub(u, l), 0.5), std::nullopt, 0};
}

inline SymElement point(Builder& B, Domain dom, TensorId t) {
  return SymElement{dom, t, B.zeros_like(t), std::nullopt, 0};
}

inline SymElement decorrelate(Builder& B, const SymElement& d) {
  if (!d.E) return d;
  return SymElement{d.domain, d.c, radius(B, d), std::nullopt, 0};
}

/// Moves every half-width into its own diagonal generator.
inline SymElement correlate(Builder& B, const SymElement& d) {
  const Shape& s = B.shape(d.c);
  const std::size_t p = element_count(s);
  Tensor eye(Shape{p, p}, 0.0);
  for (std::size_t i = 0; i < p; ++i) eye[i * p + i] = 1.0;
  Shape gs = s;
  gs.insert(gs.begin(), p);
  const TensorId diag = B.reshape(B.mul(B.constant(std::move(eye)), B.reshape(d.b, {1, p})), gs);
  SymElement out{Domain::HybridZonotope, d.c, B.zeros_like(d.b), diag, fresh_origin()};
  if (d.E) out.E = B.op(OpKind::ConcatV2, {*d.E, diag}, axis_attrs(0));
  return out;
}

inline std::size_t generator_count(Builder& B, const SymElement& d) { return d.E ? B.shape(*d.E)[0] : 0; }

/// Sum of two elements of equal shape. Shared origin: generators add
/// index-wise. Distinct origins: stacks are concatenated under a new origin.
inline SymElement add(Builder& B, const SymElement& a, const SymElement& b) {
  if (a.domain != b.domain) throw ContractError("cannot add elements of different domains");
  SymElement out{a.domain, B.add(a.c, b.c), B.add(a.b, b.b), std::nullopt, 0};
  if (a.E && b.E) {
    if (B.shape(a.c) != B.shape(b.c)) {
      throw DimensionError("adding generator stacks of shapes " + to_string(B.shape(a.c)) + " and " + to_string(B.shape(b.c)));
    }
    if (a.origin == b.origin) {
      out.E = B.add(*a.E, *b.E);
      out.origin = a.origin;
    } else {
      out.E = B.op(OpKind::ConcatV2, {*a.E, *b.E}, axis_attrs(0));
      out.origin = fresh_origin();
    }
  } else if (a.E || b.E) {
    const SymElement& src = a.E ? a : b;
    if (B.shape(src.c) != B.shape(out.c)) throw DimensionError("generator stack cannot broadcast");
    out.E = src.E;
    out.origin = src.origin;
  }
  return out;
}

inline SymElement negate(Builder& B, const SymElement& d) {
  SymElement out{d.domain, B.neg(d.c), d.b, std::nullopt, d.origin};
  if (d.E) out.E = B.neg(*d.E);
  return out;
}

/// Bounding-box vertex farthest from `y`; ties pick the upper endpoint.
inline TensorId adversary(Builder& B, const SymElement& d, TensorId y) {
  auto [l, u] = lower_upper(B, d);
  const TensorId pick_upper = B.greater_equal(B.abs(B.sub(u, y)), B.abs(B.sub(l, y)));
  return B.select(pick_upper, u, l);
}

}  // namespace sym

/// Concrete counterpart of sym::adversary.
inline Tensor get_adversary(const Element& d, const Tensor& y) {
  if (d.c.shape() != y.shape()) throw DimensionError("get_adversary: target shape differs from element shape");
  const auto bb = bounds(d);
  Tensor v(y.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::abs(bb.upper[i] - y[i]) >= std::abs(bb.lower[i] - y[i]) ? bb.upper[i] : bb.lower[i];
  }
  return v;
}

}  // namespace zonotrain
