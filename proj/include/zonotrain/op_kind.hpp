#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "zonotrain/errors.hpp"

namespace zonotrain {

enum class OpKind : std::uint8_t {
  MatMul,
  Conv2D,
  BiasAdd,
  Add,
  Sub,
  Mul,
  RealDiv,
  Neg,
  Abs,
  Exp,
  Log,
  Log1p,
  Relu,
  Sigmoid,
  Softmax,
  Maximum,
  Minimum,
  GreaterEqual,
  MaxPool2,
  Mean,
  Sum,
  Reshape,
  Transpose,
  ConcatV2,
  StridedSlice,
  Shape,
  OnesLike,
  ZerosLike,
  Pack,
  Select,
  // Loss plumbing; never part of a model graph and has no domain transformer.
  SparseSoftmaxCrossEntropy,
};

inline constexpr std::size_t kOpKindCount = 31;

inline constexpr std::array<std::string_view, kOpKindCount> kOpNames = {
    "MatMul",  "Conv2D",   "BiasAdd",   "Add",        "Sub",          "Mul",       "RealDiv",
    "Neg",     "Abs",      "Exp",       "Log",        "Log1p",        "Relu",      "Sigmoid",
    "Softmax", "Maximum",  "Minimum",   "GreaterEqual", "MaxPool2",   "Mean",      "Sum",
    "Reshape", "Transpose", "ConcatV2", "StridedSlice", "Shape",      "OnesLike",  "ZerosLike",
    "Pack",    "Select",   "SparseSoftmaxCrossEntropy"};

inline std::string_view name_of(OpKind kind) { return kOpNames[static_cast<std::size_t>(kind)]; }

inline std::optional<OpKind> op_kind_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpKindCount; ++i) {
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  }
  return std::nullopt;
}

inline bool is_unary_elementwise(OpKind k) {
  switch (k) {
    case OpKind::Neg:
    case OpKind::Abs:
    case OpKind::Exp:
    case OpKind::Log:
    case OpKind::Log1p:
    case OpKind::Relu:
    case OpKind::Sigmoid:
      return true;
    default:
      return false;
  }
}

inline bool is_binary_elementwise(OpKind k) {
  switch (k) {
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul:
    case OpKind::RealDiv:
    case OpKind::Maximum:
    case OpKind::Minimum:
    case OpKind::GreaterEqual:
      return true;
    default:
      return false;
  }
}

/// Inclusive input-count range for each op; variadic ops use max = SIZE_MAX.
struct Arity {
  std::size_t min;
  std::size_t max;
};

inline Arity arity_of(OpKind k) {
  constexpr std::size_t many = static_cast<std::size_t>(-1);
  if (is_unary_elementwise(k)) return {1, 1};
  if (is_binary_elementwise(k)) return {2, 2};
  switch (k) {
    case OpKind::MatMul:
    case OpKind::Conv2D:
    case OpKind::BiasAdd:
    case OpKind::SparseSoftmaxCrossEntropy:
      return {2, 2};
    case OpKind::Select:
      return {3, 3};
    case OpKind::ConcatV2:
    case OpKind::Pack:
      return {1, many};
    default:
      return {1, 1};
  }
}

/// Per-op attributes. Only the fields listed by `attr_fields` are meaningful
/// for a given kind; the rest stay at their defaults.
struct Attrs {
  std::int64_t stride = 1;
  std::int64_t padding = 0;  // symmetric zero padding: 0 = VALID, 1 = SAME(1)
  std::int64_t axis = 0;
  std::vector<std::int64_t> axes;  // reduction axes; empty = all
  bool keepdims = false;
  std::vector<std::int64_t> shape;  // Reshape target, at most one -1
  std::vector<std::int64_t> perm;
  std::vector<std::int64_t> begin;
  std::vector<std::int64_t> end;
  std::vector<std::int64_t> strides;

  bool operator==(const Attrs&) const = default;
};

enum class AttrField { Stride, Padding, Axis, Axes, Keepdims, Shape, Perm, Begin, End, Strides };

inline std::vector<AttrField> attr_fields(OpKind k) {
  switch (k) {
    case OpKind::Conv2D:
      return {AttrField::Stride, AttrField::Padding};
    case OpKind::Mean:
    case OpKind::Sum:
      return {AttrField::Axes, AttrField::Keepdims};
    case OpKind::Reshape:
      return {AttrField::Shape};
    case OpKind::Transpose:
      return {AttrField::Perm};
    case OpKind::ConcatV2:
    case OpKind::Pack:
      return {AttrField::Axis};
    case OpKind::StridedSlice:
      return {AttrField::Begin, AttrField::End, AttrField::Strides};
    default:
      return {};
  }
}

inline Attrs conv_attrs(std::int64_t stride, std::int64_t padding) {
  Attrs a;
  a.stride = stride;
  a.padding = padding;
  return a;
}

inline Attrs reduce_attrs(std::vector<std::int64_t> axes, bool keepdims = false) {
  Attrs a;
  a.axes = std::move(axes);
  a.keepdims = keepdims;
  return a;
}

inline Attrs reshape_attrs(std::vector<std::int64_t> shape) {
  Attrs a;
  a.shape = std::move(shape);
  return a;
}

inline Attrs perm_attrs(std::vector<std::int64_t> perm) {
  Attrs a;
  a.perm = std::move(perm);
  return a;
}

inline Attrs axis_attrs(std::int64_t axis) {
  Attrs a;
  a.axis = axis;
  return a;
}

inline Attrs slice_attrs(std::vector<std::int64_t> begin, std::vector<std::int64_t> end,
                         std::vector<std::int64_t> strides = {}) {
  Attrs a;
  a.begin = std::move(begin);
  a.end = std::move(end);
  a.strides = std::move(strides);
  return a;
}

}  // namespace zonotrain
