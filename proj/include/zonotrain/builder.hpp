#pragma once

#include <vector>

#include "zonotrain/graph.hpp"

namespace zonotrain {

/// Thin convenience layer for appending ops to a graph.
class Builder {
 public:
  explicit Builder(Graph& g) : g_(&g) {}

  Graph& graph() const noexcept { return *g_; }
  const Shape& shape(TensorId t) const { return g_->shape(t); }
  std::size_t rank(TensorId t) const { return shape(t).size(); }

  TensorId op(OpKind k, std::vector<TensorId> in, Attrs a = {}) { return g_->add_op(k, std::move(in), std::move(a)); }

  TensorId scalar(double v) { return g_->add_constant(v); }
  TensorId constant(Tensor t) { return g_->add_constant(std::move(t)); }
  TensorId zeros(const Shape& s) { return g_->add_constant(Tensor(s, 0.0)); }

  TensorId add(TensorId a, TensorId b) { return op(OpKind::Add, {a, b}); }
  TensorId sub(TensorId a, TensorId b) { return op(OpKind::Sub, {a, b}); }
  TensorId mul(TensorId a, TensorId b) { return op(OpKind::Mul, {a, b}); }
  TensorId mul(TensorId a, double k) { return mul(a, scalar(k)); }
  TensorId div(TensorId a, TensorId b) { return op(OpKind::RealDiv, {a, b}); }
  TensorId neg(TensorId a) { return op(OpKind::Neg, {a}); }
  TensorId abs(TensorId a) { return op(OpKind::Abs, {a}); }
  TensorId relu(TensorId a) { return op(OpKind::Relu, {a}); }
  TensorId exp(TensorId a) { return op(OpKind::Exp, {a}); }
  TensorId log(TensorId a) { return op(OpKind::Log, {a}); }
  TensorId maximum(TensorId a, TensorId b) { return op(OpKind::Maximum, {a, b}); }
  TensorId maximum(TensorId a, double k) { return maximum(a, scalar(k)); }
  TensorId minimum(TensorId a, TensorId b) { return op(OpKind::Minimum, {a, b}); }
  TensorId greater_equal(TensorId a, TensorId b) { return op(OpKind::GreaterEqual, {a, b}); }
  TensorId select(TensorId m, TensorId a, TensorId b) { return op(OpKind::Select, {m, a, b}); }
  TensorId zeros_like(TensorId a) { return op(OpKind::ZerosLike, {a}); }
  TensorId ones_like(TensorId a) { return op(OpKind::OnesLike, {a}); }
  TensorId clamp(TensorId x, TensorId lo, TensorId hi) { return minimum(maximum(x, lo), hi); }

  TensorId sum(TensorId a, std::vector<std::int64_t> axes, bool keepdims = false) {
    return op(OpKind::Sum, {a}, reduce_attrs(std::move(axes), keepdims));
  }
  TensorId mean(TensorId a, std::vector<std::int64_t> axes, bool keepdims = false) {
    return op(OpKind::Mean, {a}, reduce_attrs(std::move(axes), keepdims));
  }
  TensorId reshape(TensorId a, const Shape& s) {
    std::vector<std::int64_t> t(s.begin(), s.end());
    if (shape(a) == s) return a;
    return op(OpKind::Reshape, {a}, reshape_attrs(std::move(t)));
  }

 private:
  Graph* g_;
};

}  // namespace zonotrain
