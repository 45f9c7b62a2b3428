#pragma once

#include <optional>
#include <span>
#include <vector>

#include "zonotrain/kernels.hpp"

namespace zonotrain {

/// Vector-Jacobian product of one op. Returns one entry per input; an empty
/// optional means the gradient is identically zero for that input.
///
/// Subgradient conventions at kinks: Relu and Abs use 0 at the origin,
/// Maximum/Minimum route ties to the left operand.
inline std::vector<std::optional<Tensor>> vjp(OpKind kind, std::span<const Tensor* const> in, const Tensor& out,
                                              const Tensor& dy, const Attrs& attrs) {
  std::vector<std::optional<Tensor>> g(in.size());
  const Tensor& a = *in[0];
  auto unary = [&](auto deriv) {
    Tensor d(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = dy[i] * deriv(a[i], out[i]);
    g[0] = std::move(d);
  };
  auto binary = [&](auto da, auto db) {
    const Tensor& b = *in[1];
    const Shape& s = out.shape();
    Tensor ga(s), gb(s);
    detail::strided_walk(s, {broadcast_strides(a.shape(), s), broadcast_strides(b.shape(), s)}, {},
                         [&](std::size_t i, const std::size_t* off) {
                           const double x = a[off[0]], y = b[off[1]];
                           ga[i] = dy[i] * da(x, y);
                           gb[i] = dy[i] * db(x, y);
                         });
    g[0] = sum_to_shape(ga, a.shape());
    g[1] = sum_to_shape(gb, b.shape());
  };

  switch (kind) {
    case OpKind::MatMul:
      g[0] = matmul_nt(dy, *in[1]);
      g[1] = matmul_tn(a, dy);
      break;
    case OpKind::Conv2D:
      g[0] = conv2d_grad_input(dy, a.shape(), *in[1], attrs);
      g[1] = conv2d_grad_kernel(dy, a, in[1]->shape(), attrs);
      break;
    case OpKind::BiasAdd:
    case OpKind::Add:
      g[0] = sum_to_shape(dy, a.shape());
      g[1] = sum_to_shape(dy, in[1]->shape());
      break;
    case OpKind::Sub:
      g[0] = sum_to_shape(dy, a.shape());
      g[1] = sum_to_shape(map_unary(dy, [](double v) { return -v; }), in[1]->shape());
      break;
    case OpKind::Mul:
      binary([](double, double y) { return y; }, [](double x, double) { return x; });
      break;
    case OpKind::RealDiv:
      binary([](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
      break;
    case OpKind::Maximum:
      binary([](double x, double y) { return x >= y ? 1.0 : 0.0; }, [](double x, double y) { return x >= y ? 0.0 : 1.0; });
      break;
    case OpKind::Minimum:
      binary([](double x, double y) { return x <= y ? 1.0 : 0.0; }, [](double x, double y) { return x <= y ? 0.0 : 1.0; });
      break;
    case OpKind::Neg:
      unary([](double, double) { return -1.0; });
      break;
    case OpKind::Abs:
      unary([](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
      break;
    case OpKind::Exp:
      unary([](double, double y) { return y; });
      break;
    case OpKind::Log:
      unary([](double x, double) { return 1.0 / x; });
      break;
    case OpKind::Log1p:
      unary([](double x, double) { return 1.0 / (1.0 + x); });
      break;
    case OpKind::Relu:
      unary([](double x, double) { return x > 0 ? 1.0 : 0.0; });
      break;
    case OpKind::Sigmoid:
      unary([](double, double y) { return y * (1.0 - y); });
      break;
    case OpKind::Softmax: {
      const std::size_t k = out.shape().back();
      Tensor d(out.shape());
      for (std::size_t r = 0; k && r < out.size() / k; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += dy[r * k + j] * out[r * k + j];
        for (std::size_t j = 0; j < k; ++j) d[r * k + j] = out[r * k + j] * (dy[r * k + j] - dot);
      }
      g[0] = std::move(d);
      break;
    }
    case OpKind::MaxPool2: {
      std::vector<std::size_t> arg;
      maxpool2(a, &arg);
      Tensor d(a.shape());
      for (std::size_t i = 0; i < arg.size(); ++i) d[arg[i]] += dy[i];
      g[0] = std::move(d);
      break;
    }
    case OpKind::Mean:
    case OpKind::Sum: {
      const auto axes = detail::reduced_axes(attrs, a.rank(), name_of(kind));
      const Shape keep = detail::keepdims_shape(a.shape(), axes);
      Tensor d = broadcast_to(dy.reshaped(keep), a.shape());
      if (kind == OpKind::Mean) {
        const double count = static_cast<double>(a.size()) / static_cast<double>(std::max<std::size_t>(element_count(keep), 1));
        for (std::size_t i = 0; i < d.size(); ++i) d[i] /= count;
      }
      g[0] = std::move(d);
      break;
    }
    case OpKind::Reshape:
      g[0] = dy.reshaped(a.shape());
      break;
    case OpKind::Transpose:
      g[0] = transpose(dy, inverse_perm(attrs.perm));
      break;
    case OpKind::ConcatV2: {
      std::vector<Shape> shapes;
      for (auto* t : in) shapes.push_back(t->shape());
      auto parts = concat_grad(dy, shapes, attrs.axis);
      for (std::size_t i = 0; i < parts.size(); ++i) g[i] = std::move(parts[i]);
      break;
    }
    case OpKind::Pack: {
      const auto axis = detail::normalize_axis(attrs.axis, out.rank(), "Pack");
      std::vector<Shape> shapes(in.size(), out.shape());
      for (auto& s : shapes) s[axis] = 1;
      auto parts = concat_grad(dy, shapes, static_cast<std::int64_t>(axis));
      for (std::size_t i = 0; i < parts.size(); ++i) g[i] = parts[i].reshaped(in[i]->shape());
      break;
    }
    case OpKind::StridedSlice:
      g[0] = strided_slice_grad(dy, a.shape(), attrs);
      break;
    case OpKind::Select: {
      const Shape& s = out.shape();
      const Tensor& b = *in[1];
      const Tensor& c = *in[2];
      Tensor gb(s), gc(s);
      detail::strided_walk(s, {broadcast_strides(a.shape(), s)}, {}, [&](std::size_t i, const std::size_t* off) {
        (a[off[0]] != 0.0 ? gb : gc)[i] = dy[i];
      });
      g[1] = sum_to_shape(gb, b.shape());
      g[2] = sum_to_shape(gc, c.shape());
      break;
    }
    case OpKind::SparseSoftmaxCrossEntropy: {
      Tensor d = softmax_last(a);
      const std::size_t n = a.extent(0), k = a.extent(1);
      for (std::size_t i = 0; i < n; ++i) {
        d[i * k + label_index((*in[1])[i], k)] -= 1.0;
        for (std::size_t j = 0; j < k; ++j) d[i * k + j] *= dy[i];
      }
      g[0] = std::move(d);
      break;
    }
    case OpKind::GreaterEqual:
    case OpKind::Shape:
    case OpKind::OnesLike:
    case OpKind::ZerosLike:
      break;
  }
  return g;
}

}  // namespace zonotrain
