#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zonotrain/errors.hpp"
#include "zonotrain/op_kind.hpp"
#include "zonotrain/tensor.hpp"

namespace zonotrain {

namespace detail {

inline std::size_t normalize_axis(std::int64_t axis, std::size_t rank, std::string_view op) {
  const auto r = static_cast<std::int64_t>(rank);
  const std::int64_t a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return static_cast<std::size_t>(a);
}

/// Walks every flat index of `shape` in row-major order, maintaining one
/// running offset per stride vector. `fn(flat, offsets)` sees the offsets
/// for the current index.
template <class Fn>
void strided_walk(const Shape& shape, const std::vector<std::vector<std::size_t>>& strides,
                  std::vector<std::size_t> base, Fn&& fn) {
  const std::size_t n = element_count(shape);
  if (n == 0) return;
  const std::size_t rank = shape.size();
  const std::size_t k = strides.size();
  std::vector<std::size_t> idx(rank, 0);
  std::vector<std::size_t> off = std::move(base);
  off.resize(k, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    fn(flat, off.data());
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      for (std::size_t j = 0; j < k; ++j) off[j] += strides[j][d];
      if (idx[d] < shape[d]) break;
      for (std::size_t j = 0; j < k; ++j) off[j] -= strides[j][d] * shape[d];
      idx[d] = 0;
    }
  }
}

inline std::vector<std::size_t> reduced_axes(const Attrs& attrs, std::size_t rank, std::string_view op) {
  std::vector<std::size_t> axes;
  if (attrs.axes.empty()) {
    for (std::size_t i = 0; i < rank; ++i) axes.push_back(i);
  } else {
    for (auto a : attrs.axes) axes.push_back(normalize_axis(a, rank, op));
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  }
  return axes;
}

inline Shape keepdims_shape(const Shape& in, const std::vector<std::size_t>& axes) {
  Shape out = in;
  for (auto a : axes) out[a] = 1;
  return out;
}

inline Shape drop_axes(const Shape& in, const std::vector<std::size_t>& axes) {
  Shape out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (std::find(axes.begin(), axes.end(), i) == axes.end()) out.push_back(in[i]);
  }
  return out;
}

inline Shape resolve_reshape(const Shape& in, const std::vector<std::int64_t>& target) {
  const std::size_t n = element_count(in);
  Shape out(target.size());
  std::size_t known = 1;
  std::optional<std::size_t> wildcard;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == -1) {
      if (wildcard) throw DimensionError("Reshape: more than one -1 in target shape");
      wildcard = i;
    } else if (target[i] < 0) {
      throw DimensionError("Reshape: negative extent in target shape");
    } else {
      out[i] = static_cast<std::size_t>(target[i]);
      known *= out[i];
    }
  }
  if (wildcard) {
    if (known == 0 || n % known != 0) {
      throw DimensionError("Reshape: cannot infer -1 for " + to_string(in));
    }
    out[*wildcard] = n / known;
  }
  if (element_count(out) != n) {
    throw DimensionError("Reshape: " + to_string(in) + " has " + std::to_string(n) + " elements, target has " +
                         std::to_string(element_count(out)));
  }
  return out;
}

struct SliceSpec {
  std::vector<std::size_t> begin;
  std::vector<std::size_t> step;
  Shape out;
};

inline SliceSpec resolve_slice(const Shape& in, const Attrs& a) {
  const std::size_t rank = in.size();
  if (a.begin.size() > rank || a.end.size() != a.begin.size() ||
      (!a.strides.empty() && a.strides.size() != a.begin.size())) {
    throw DimensionError("StridedSlice: begin/end/strides do not match rank " + std::to_string(rank));
  }
  SliceSpec s{std::vector<std::size_t>(rank, 0), std::vector<std::size_t>(rank, 1), in};
  for (std::size_t d = 0; d < a.begin.size(); ++d) {
    const auto ext = static_cast<std::int64_t>(in[d]);
    std::int64_t b = a.begin[d] < 0 ? a.begin[d] + ext : a.begin[d];
    std::int64_t e = a.end[d] < 0 ? a.end[d] + ext : a.end[d];
    const std::int64_t st = a.strides.empty() ? 1 : a.strides[d];
    if (st <= 0) throw DimensionError("StridedSlice: strides must be positive");
    e = std::min(e, ext);
    if (b < 0 || b > ext || e < b) throw DimensionError("StridedSlice: slice out of bounds on axis " + std::to_string(d));
    s.begin[d] = static_cast<std::size_t>(b);
    s.step[d] = static_cast<std::size_t>(st);
    s.out[d] = static_cast<std::size_t>((e - b + st - 1) / st);
  }
  return s;
}

struct ConvGeometry {
  std::size_t n, h, w, c, kh, kw, f, stride, pad, oh, ow;
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& k, const Attrs& a) {
  if (x.size() != 4 || k.size() != 4) throw DimensionError("Conv2D: expects NHWC input and [kh,kw,C,F] kernel");
  if (x[3] != k[2]) {
    throw DimensionError("Conv2D: input has " + std::to_string(x[3]) + " channels, kernel expects " +
                         std::to_string(k[2]));
  }
  if (a.stride <= 0 || a.padding < 0) throw DimensionError("Conv2D: invalid stride or padding");
  ConvGeometry g{x[0], x[1], x[2], x[3], k[0], k[1], k[3], static_cast<std::size_t>(a.stride),
                 static_cast<std::size_t>(a.padding), 0, 0};
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) throw DimensionError("Conv2D: kernel larger than padded input");
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shape inference

inline Shape infer_shape(OpKind kind, std::span<const Shape> in, const Attrs& attrs) {
  const Arity ar = arity_of(kind);
  if (in.size() < ar.min || in.size() > ar.max) {
    throw StructureError(std::string(name_of(kind)) + ": wrong number of inputs (" + std::to_string(in.size()) + ")");
  }
  if (is_unary_elementwise(kind) || kind == OpKind::OnesLike || kind == OpKind::ZerosLike) return in[0];
  if (is_binary_elementwise(kind)) return broadcast_shapes(in[0], in[1]);
  switch (kind) {
    case OpKind::MatMul: {
      const auto& a = in[0];
      const auto& b = in[1];
      if (a.size() != 2 || b.size() != 2 || a[1] != b[0]) {
        throw DimensionError("MatMul: incompatible shapes " + to_string(a) + " x " + to_string(b));
      }
      return {a[0], b[1]};
    }
    case OpKind::Conv2D: {
      const auto g = detail::conv_geometry(in[0], in[1], attrs);
      return {g.n, g.oh, g.ow, g.f};
    }
    case OpKind::BiasAdd:
      if (in[1].size() != 1 || in[0].empty() || in[0].back() != in[1][0]) {
        throw DimensionError("BiasAdd: bias " + to_string(in[1]) + " does not match " + to_string(in[0]));
      }
      return in[0];
    case OpKind::Softmax:
      if (in[0].empty()) throw DimensionError("Softmax: scalar input");
      return in[0];
    case OpKind::MaxPool2:
      if (in[0].size() != 4) throw DimensionError("MaxPool2: expects NHWC input");
      if (in[0][1] < 2 || in[0][2] < 2) throw DimensionError("MaxPool2: spatial extent below 2");
      return {in[0][0], in[0][1] / 2, in[0][2] / 2, in[0][3]};
    case OpKind::Mean:
    case OpKind::Sum: {
      const auto axes = detail::reduced_axes(attrs, in[0].size(), name_of(kind));
      return attrs.keepdims ? detail::keepdims_shape(in[0], axes) : detail::drop_axes(in[0], axes);
    }
    case OpKind::Reshape:
      return detail::resolve_reshape(in[0], attrs.shape);
    case OpKind::Transpose: {
      if (attrs.perm.size() != in[0].size()) throw DimensionError("Transpose: perm rank mismatch");
      Shape out(in[0].size());
      std::vector<bool> seen(in[0].size(), false);
      for (std::size_t i = 0; i < attrs.perm.size(); ++i) {
        const auto p = detail::normalize_axis(attrs.perm[i], in[0].size(), "Transpose");
        if (seen[p]) throw DimensionError("Transpose: perm is not a permutation");
        seen[p] = true;
        out[i] = in[0][p];
      }
      return out;
    }
    case OpKind::ConcatV2: {
      const auto axis = detail::normalize_axis(attrs.axis, in[0].size(), "ConcatV2");
      Shape out = in[0];
      for (std::size_t i = 1; i < in.size(); ++i) {
        if (in[i].size() != out.size()) throw DimensionError("ConcatV2: rank mismatch");
        for (std::size_t d = 0; d < out.size(); ++d) {
          if (d != axis && in[i][d] != out[d]) {
            throw DimensionError("ConcatV2: shapes " + to_string(in[0]) + " and " + to_string(in[i]) + " differ off-axis");
          }
        }
        out[axis] += in[i][axis];
      }
      return out;
    }
    case OpKind::Pack: {
      for (const auto& s : in) {
        if (s != in[0]) throw DimensionError("Pack: all inputs must share a shape");
      }
      const auto axis = detail::normalize_axis(attrs.axis, in[0].size() + 1, "Pack");
      Shape out = in[0];
      out.insert(out.begin() + static_cast<std::ptrdiff_t>(axis), in.size());
      return out;
    }
    case OpKind::StridedSlice:
      return detail::resolve_slice(in[0], attrs).out;
    case OpKind::Shape:
      return {in[0].size()};
    case OpKind::Select: {
      return broadcast_shapes(broadcast_shapes(in[0], in[1]), in[2]);
    }
    case OpKind::SparseSoftmaxCrossEntropy:
      if (in[0].size() != 2 || in[1].size() != 1 || in[1][0] != in[0][0]) {
        throw DimensionError("SparseSoftmaxCrossEntropy: expects logits [N,K] and labels [N]");
      }
      return {in[0][0]};
    default:
      break;
  }
  throw UnsupportedOpError(std::string(name_of(kind)), "shape inference");
}

// ---------------------------------------------------------------------------
// Elementwise helpers

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  const Shape shape = broadcast_shapes(a.shape(), b.shape());
  Tensor out(shape);
  if (b.size() == 1) {
    const double bv = b[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[a.size() == 1 ? 0 : i], bv);
    return out;
  }
  if (a.size() == 1) {
    const double av = a[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av, b[i]);
    return out;
  }
  detail::strided_walk(shape, {broadcast_strides(a.shape(), shape), broadcast_strides(b.shape(), shape)}, {},
                       [&](std::size_t i, const std::size_t* off) { out[i] = f(a[off[0]], b[off[1]]); });
  return out;
}

/// Sums `g` (shaped like a broadcast result) down to `shape`.
inline Tensor sum_to_shape(const Tensor& g, const Shape& shape) {
  if (g.shape() == shape) return g;
  Tensor out(shape);
  detail::strided_walk(g.shape(), {broadcast_strides(shape, g.shape())}, {},
                       [&](std::size_t i, const std::size_t* off) { out[off[0]] += g[i]; });
  return out;
}

/// Expands `t` to `shape` by broadcasting.
inline Tensor broadcast_to(const Tensor& t, const Shape& shape) {
  if (t.shape() == shape) return t;
  if (broadcast_shapes(t.shape(), shape) != shape) {
    throw DimensionError("cannot broadcast " + to_string(t.shape()) + " to " + to_string(shape));
  }
  Tensor out(shape);
  detail::strided_walk(shape, {broadcast_strides(t.shape(), shape)}, {},
                       [&](std::size_t i, const std::size_t* off) { out[i] = t[off[0]]; });
  return out;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Dense kernels

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape s = infer_shape(OpKind::MatMul, std::vector<Shape>{a.shape(), b.shape()}, {});
  const std::size_t m = s[0], k = a.extent(1), n = s[1];
  Tensor out(s);
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = o.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += x * brow[j];
    }
  }
  return out;
}

/// aᵀ·b for a [k,m], b [k,n].
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const std::size_t k = a.extent(0), m = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) throw DimensionError("matmul_tn: inner mismatch");
  Tensor out(Shape{m, n});
  auto o = out.data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.data().data() + p * m;
    const double* brow = b.data().data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double x = arow[i];
      if (x == 0.0) continue;
      double* orow = o.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  return out;
}

/// a·bᵀ for a [m,k], b [n,k].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
  if (b.extent(1) != k) throw DimensionError("matmul_nt: inner mismatch");
  Tensor out(Shape{m, n});
  auto o = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data().data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data().data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      o[i * n + j] = acc;
    }
  }
  return out;
}

namespace detail {

/// Patch matrix [oh*ow, kh*kw*c] for image `img`; padded taps stay zero.
inline void im2col(const Tensor& x, const ConvGeometry& g, std::size_t img, std::vector<double>& col) {
  const std::size_t cols = g.kh * g.kw * g.c;
  col.assign(g.oh * g.ow * cols, 0.0);
  const double* base = x.data().data() + img * g.h * g.w * g.c;
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      double* dst = col.data() + (oy * g.ow + ox) * cols;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const double* src = base + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c;
          std::copy(src, src + g.c, dst + (ky * g.kw + kx) * g.c);
        }
      }
    }
  }
}

inline void col2im_add(const std::vector<double>& col, const ConvGeometry& g, std::size_t img, Tensor& dx) {
  const std::size_t cols = g.kh * g.kw * g.c;
  double* base = dx.data().data() + img * g.h * g.w * g.c;
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      const double* src = col.data() + (oy * g.ow + ox) * cols;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          double* dst = base + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.c;
          const double* s = src + (ky * g.kw + kx) * g.c;
          for (std::size_t ch = 0; ch < g.c; ++ch) dst[ch] += s[ch];
        }
      }
    }
  }
}

}  // namespace detail

inline Tensor conv2d(const Tensor& x, const Tensor& k, const Attrs& attrs) {
  const auto g = detail::conv_geometry(x.shape(), k.shape(), attrs);
  Tensor out(Shape{g.n, g.oh, g.ow, g.f});
  const std::size_t cols = g.kh * g.kw * g.c;
  const Tensor kmat = k.reshaped({cols, g.f});
  std::vector<double> col;
  for (std::size_t img = 0; img < g.n; ++img) {
    detail::im2col(x, g, img, col);
    const Tensor y = matmul(Tensor(Shape{g.oh * g.ow, cols}, col), kmat);
    std::copy(y.values().begin(), y.values().end(), out.data().begin() + static_cast<std::ptrdiff_t>(img * g.oh * g.ow * g.f));
  }
  return out;
}

inline Tensor conv2d_grad_input(const Tensor& dy, const Shape& xshape, const Tensor& k, const Attrs& attrs) {
  const auto g = detail::conv_geometry(xshape, k.shape(), attrs);
  Tensor dx(xshape);
  const std::size_t cols = g.kh * g.kw * g.c;
  const Tensor kmat = k.reshaped({cols, g.f});
  const std::size_t per = g.oh * g.ow * g.f;
  for (std::size_t img = 0; img < g.n; ++img) {
    Tensor dyi(Shape{g.oh * g.ow, g.f},
               std::vector<double>(dy.values().begin() + static_cast<std::ptrdiff_t>(img * per),
                                   dy.values().begin() + static_cast<std::ptrdiff_t>((img + 1) * per)));
    const Tensor dcol = matmul_nt(dyi, kmat);
    detail::col2im_add(dcol.values(), g, img, dx);
  }
  return dx;
}

inline Tensor conv2d_grad_kernel(const Tensor& dy, const Tensor& x, const Shape& kshape, const Attrs& attrs) {
  const auto g = detail::conv_geometry(x.shape(), kshape, attrs);
  const std::size_t cols = g.kh * g.kw * g.c;
  Tensor dk(Shape{cols, g.f});
  const std::size_t per = g.oh * g.ow * g.f;
  std::vector<double> col;
  for (std::size_t img = 0; img < g.n; ++img) {
    detail::im2col(x, g, img, col);
    Tensor dyi(Shape{g.oh * g.ow, g.f},
               std::vector<double>(dy.values().begin() + static_cast<std::ptrdiff_t>(img * per),
                                   dy.values().begin() + static_cast<std::ptrdiff_t>((img + 1) * per)));
    const Tensor part = matmul_tn(Tensor(Shape{g.oh * g.ow, cols}, col), dyi);
    for (std::size_t i = 0; i < dk.size(); ++i) dk[i] += part[i];
  }
  return dk.reshaped(kshape);
}

/// 2×2 stride-2 max pooling; `argmax` receives the flat input index chosen
/// for each output (first maximum in row-major block order).
inline Tensor maxpool2(const Tensor& x, std::vector<std::size_t>* argmax = nullptr) {
  const Shape s = infer_shape(OpKind::MaxPool2, std::vector<Shape>{x.shape()}, {});
  const std::size_t h = x.extent(1), w = x.extent(2), c = x.extent(3);
  Tensor out(s);
  if (argmax) argmax->assign(out.size(), 0);
  std::size_t o = 0;
  for (std::size_t n = 0; n < s[0]; ++n) {
    for (std::size_t oy = 0; oy < s[1]; ++oy) {
      for (std::size_t ox = 0; ox < s[2]; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          std::size_t best = ((n * h + 2 * oy) * w + 2 * ox) * c + ch;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = ((n * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
              if (x[idx] > x[best]) best = idx;
            }
          }
          out[o] = x[best];
          if (argmax) (*argmax)[o] = best;
        }
      }
    }
  }
  return out;
}

inline Tensor reduce_sum(const Tensor& x, const Attrs& attrs, bool mean) {
  const auto axes = detail::reduced_axes(attrs, x.rank(), mean ? "Mean" : "Sum");
  const Shape keep = detail::keepdims_shape(x.shape(), axes);
  Tensor acc(keep);
  detail::strided_walk(x.shape(), {broadcast_strides(keep, x.shape())}, {},
                       [&](std::size_t i, const std::size_t* off) { acc[off[0]] += x[i]; });
  if (mean) {
    const double count = static_cast<double>(x.size()) / static_cast<double>(std::max<std::size_t>(acc.size(), 1));
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] /= count;
  }
  return attrs.keepdims ? acc : acc.reshaped(detail::drop_axes(x.shape(), axes));
}

inline Tensor transpose(const Tensor& x, const std::vector<std::int64_t>& perm) {
  Attrs a;
  a.perm = perm;
  const Shape out_shape = infer_shape(OpKind::Transpose, std::vector<Shape>{x.shape()}, a);
  const auto in_strides = strides_of(x.shape());
  std::vector<std::size_t> st(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) st[i] = in_strides[detail::normalize_axis(perm[i], x.rank(), "Transpose")];
  Tensor out(out_shape);
  detail::strided_walk(out_shape, {st}, {}, [&](std::size_t i, const std::size_t* off) { out[i] = x[off[0]]; });
  return out;
}

inline std::vector<std::int64_t> inverse_perm(const std::vector<std::int64_t>& perm) {
  std::vector<std::int64_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto p = perm[i] < 0 ? perm[i] + static_cast<std::int64_t>(perm.size()) : perm[i];
    inv[static_cast<std::size_t>(p)] = static_cast<std::int64_t>(i);
  }
  return inv;
}

inline Tensor strided_slice(const Tensor& x, const Attrs& attrs) {
  const auto spec = detail::resolve_slice(x.shape(), attrs);
  const auto in_strides = strides_of(x.shape());
  std::vector<std::size_t> st(x.rank());
  std::size_t base = 0;
  for (std::size_t d = 0; d < x.rank(); ++d) {
    st[d] = in_strides[d] * spec.step[d];
    base += spec.begin[d] * in_strides[d];
  }
  Tensor out(spec.out);
  detail::strided_walk(spec.out, {st}, {base}, [&](std::size_t i, const std::size_t* off) { out[i] = x[off[0]]; });
  return out;
}

/// Scatter-adds `dy` back into a zero tensor shaped like the slice source.
inline Tensor strided_slice_grad(const Tensor& dy, const Shape& xshape, const Attrs& attrs) {
  const auto spec = detail::resolve_slice(xshape, attrs);
  const auto in_strides = strides_of(xshape);
  std::vector<std::size_t> st(xshape.size());
  std::size_t base = 0;
  for (std::size_t d = 0; d < xshape.size(); ++d) {
    st[d] = in_strides[d] * spec.step[d];
    base += spec.begin[d] * in_strides[d];
  }
  Tensor dx(xshape);
  detail::strided_walk(spec.out, {st}, {base}, [&](std::size_t i, const std::size_t* off) { dx[off[0]] += dy[i]; });
  return dx;
}

inline Tensor concat(std::span<const Tensor* const> parts, std::int64_t axis_attr) {
  std::vector<Shape> shapes;
  for (auto* p : parts) shapes.push_back(p->shape());
  const Shape out_shape = infer_shape(OpKind::ConcatV2, shapes, axis_attrs(axis_attr));
  const auto axis = detail::normalize_axis(axis_attr, out_shape.size(), "ConcatV2");
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= out_shape[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < out_shape.size(); ++d) inner *= out_shape[d];
  Tensor out(out_shape);
  std::size_t pos = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (auto* p : parts) {
      const std::size_t chunk = p->shape()[axis] * inner;
      std::copy_n(p->data().begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.data().begin() + static_cast<std::ptrdiff_t>(pos));
      pos += chunk;
    }
  }
  return out;
}

/// Splits a concat gradient into pieces shaped like `shapes`.
inline std::vector<Tensor> concat_grad(const Tensor& dy, const std::vector<Shape>& shapes, std::int64_t axis_attr) {
  const auto axis = detail::normalize_axis(axis_attr, dy.rank(), "ConcatV2");
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= dy.shape()[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < dy.rank(); ++d) inner *= dy.shape()[d];
  std::vector<Tensor> parts;
  for (const auto& s : shapes) parts.emplace_back(s);
  std::size_t pos = 0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < shapes.size(); ++k) {
      const std::size_t chunk = shapes[k][axis] * inner;
      std::copy_n(dy.data().begin() + static_cast<std::ptrdiff_t>(pos), chunk,
                  parts[k].data().begin() + static_cast<std::ptrdiff_t>(o * chunk));
      pos += chunk;
    }
  }
  return parts;
}

inline Tensor softmax_last(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("Softmax: scalar input");
  const std::size_t k = x.shape().back();
  const std::size_t rows = k ? x.size() / k : 0;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * k;
    double* o = out.data().data() + r * k;
    const double m = *std::max_element(in, in + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (o[j] = std::exp(in[j] - m));
    for (std::size_t j = 0; j < k; ++j) o[j] /= s;
  }
  return out;
}

inline std::size_t label_index(double v, std::size_t classes) {
  if (!(v >= 0) || v != std::floor(v) || v >= static_cast<double>(classes)) {
    throw DomainError("label " + std::to_string(v) + " outside [0, " + std::to_string(classes) + ")");
  }
  return static_cast<std::size_t>(v);
}

inline Tensor sparse_xent(const Tensor& logits, const Tensor& labels) {
  infer_shape(OpKind::SparseSoftmaxCrossEntropy, std::vector<Shape>{logits.shape(), labels.shape()}, {});
  const std::size_t n = logits.extent(0), k = logits.extent(1);
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data().data() + i * k;
    const double m = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - m);
    out[i] = m + std::log(s) - z[label_index(labels[i], k)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch

inline Tensor evaluate_op(OpKind kind, std::span<const Tensor* const> in, const Attrs& attrs) {
  std::vector<Shape> shapes;
  shapes.reserve(in.size());
  for (auto* t : in) shapes.push_back(t->shape());
  infer_shape(kind, shapes, attrs);

  const Tensor& a = *in[0];
  Tensor out;
  switch (kind) {
    case OpKind::MatMul:
      out = matmul(a, *in[1]);
      break;
    case OpKind::Conv2D:
      out = conv2d(a, *in[1], attrs);
      break;
    case OpKind::BiasAdd:
    case OpKind::Add:
      out = map_binary(a, *in[1], [](double x, double y) { return x + y; });
      break;
    case OpKind::Sub:
      out = map_binary(a, *in[1], [](double x, double y) { return x - y; });
      break;
    case OpKind::Mul:
      out = map_binary(a, *in[1], [](double x, double y) { return x * y; });
      break;
    case OpKind::RealDiv:
      out = map_binary(a, *in[1], [](double x, double y) {
        if (y == 0.0) throw DomainError("RealDiv: division by zero");
        return x / y;
      });
      break;
    case OpKind::Maximum:
      out = map_binary(a, *in[1], [](double x, double y) { return x >= y ? x : y; });
      break;
    case OpKind::Minimum:
      out = map_binary(a, *in[1], [](double x, double y) { return x <= y ? x : y; });
      break;
    case OpKind::GreaterEqual:
      out = map_binary(a, *in[1], [](double x, double y) { return x >= y ? 1.0 : 0.0; });
      break;
    case OpKind::Neg:
      out = map_unary(a, [](double x) { return -x; });
      break;
    case OpKind::Abs:
      out = map_unary(a, [](double x) { return std::abs(x); });
      break;
    case OpKind::Exp:
      out = map_unary(a, [](double x) { return std::exp(x); });
      break;
    case OpKind::Log:
      out = map_unary(a, [](double x) {
        if (!(x > 0.0)) throw DomainError("Log: nonpositive argument " + std::to_string(x));
        return std::log(x);
      });
      break;
    case OpKind::Log1p:
      out = map_unary(a, [](double x) {
        if (!(x > -1.0)) throw DomainError("Log1p: argument " + std::to_string(x) + " not above -1");
        return std::log1p(x);
      });
      break;
    case OpKind::Relu:
      out = map_unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
      break;
    case OpKind::Sigmoid:
      out = map_unary(a, sigmoid);
      break;
    case OpKind::Softmax:
      out = softmax_last(a);
      break;
    case OpKind::MaxPool2:
      out = maxpool2(a);
      break;
    case OpKind::Mean:
      out = reduce_sum(a, attrs, true);
      break;
    case OpKind::Sum:
      out = reduce_sum(a, attrs, false);
      break;
    case OpKind::Reshape:
      out = a.reshaped(detail::resolve_reshape(a.shape(), attrs.shape));
      break;
    case OpKind::Transpose:
      out = transpose(a, attrs.perm);
      break;
    case OpKind::ConcatV2:
      out = concat(in, attrs.axis);
      break;
    case OpKind::Pack: {
      const Shape target = infer_shape(kind, shapes, attrs);
      const auto axis = detail::normalize_axis(attrs.axis, target.size(), "Pack");
      Shape one = a.shape();
      one.insert(one.begin() + static_cast<std::ptrdiff_t>(axis), 1);
      std::vector<Tensor> lifted;
      for (auto* t : in) lifted.push_back(t->reshaped(one));
      std::vector<const Tensor*> ptrs;
      for (auto& t : lifted) ptrs.push_back(&t);
      out = concat(ptrs, static_cast<std::int64_t>(axis));
      break;
    }
    case OpKind::StridedSlice:
      out = strided_slice(a, attrs);
      break;
    case OpKind::Shape: {
      out = Tensor(Shape{a.rank()});
      for (std::size_t i = 0; i < a.rank(); ++i) out[i] = static_cast<double>(a.shape()[i]);
      break;
    }
    case OpKind::OnesLike:
      out = Tensor(a.shape(), 1.0);
      break;
    case OpKind::ZerosLike:
      out = Tensor(a.shape(), 0.0);
      break;
    case OpKind::Select: {
      const Shape s = infer_shape(kind, shapes, attrs);
      out = Tensor(s);
      const Tensor& b = *in[1];
      const Tensor& c = *in[2];
      detail::strided_walk(
          s, {broadcast_strides(a.shape(), s), broadcast_strides(b.shape(), s), broadcast_strides(c.shape(), s)}, {},
          [&](std::size_t i, const std::size_t* off) { out[i] = a[off[0]] != 0.0 ? b[off[1]] : c[off[2]]; });
      break;
    }
    case OpKind::SparseSoftmaxCrossEntropy:
      out = sparse_xent(a, *in[1]);
      break;
  }
  require_finite(out, name_of(kind));
  return out;
}

inline Tensor evaluate_op(OpKind kind, std::initializer_list<const Tensor*> in, const Attrs& attrs = {}) {
  return evaluate_op(kind, std::span<const Tensor* const>(in.begin(), in.size()), attrs);
}

}  // namespace zonotrain
