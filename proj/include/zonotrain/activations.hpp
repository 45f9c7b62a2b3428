#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "zonotrain/element.hpp"

namespace zonotrain {

enum class Curvature : std::uint8_t { Convex, Concave, Nonconvex };

/// Scalar description of a 1D activation: the function, its derivative and
/// the points where its tangent has a given slope.
struct Activation1D {
  OpKind kind;
  Curvature curvature;
  double (*f)(double);
  double (*df)(double);
  /// Points x with f'(x) = μ (unclamped). Piecewise-linear functions report
  /// their kink.
  std::vector<double> (*tangent_points)(double mu);
};

namespace act_detail {

constexpr double kTinySlope = 1e-300;

inline double relu(double x) { return x > 0 ? x : 0.0; }
inline double relu_d(double x) { return x > 0 ? 1.0 : 0.0; }
inline double abs_d(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }
inline double sig_d(double x) {
  const double s = sigmoid(x);
  return s * (1 - s);
}
inline double dexp(double x) { return std::exp(x); }
inline double dlog(double x) { return 1.0 / x; }
inline double dlog1p(double x) { return 1.0 / (1.0 + x); }
inline double fabs_(double x) { return std::abs(x); }
inline double fexp(double x) { return std::exp(x); }
inline double flog(double x) { return std::log(x); }
inline double flog1p(double x) { return std::log1p(x); }

inline std::vector<double> kink(double) { return {0.0}; }
inline std::vector<double> exp_pts(double mu) { return {std::log(std::max(mu, kTinySlope))}; }
inline std::vector<double> log_pts(double mu) { return {1.0 / std::max(mu, kTinySlope)}; }
inline std::vector<double> log1p_pts(double mu) { return {1.0 / std::max(mu, kTinySlope) - 1.0}; }

/// Roots of μY² + (2μ−1)Y + μ = 0 with Y = e^{−x}. Their product is 1, so
/// the two tangent points are ±ln Y₊.
inline double sigmoid_log_root(double mu) {
  const double m = std::max(mu, kTinySlope);
  const double disc = std::max(1.0 - 4.0 * m, 0.0);
  const double y_plus = ((1.0 - 2.0 * m) + std::sqrt(disc)) / (2.0 * m);
  return std::log(y_plus);
}
inline std::vector<double> sigmoid_pts(double mu) {
  const double r = sigmoid_log_root(mu);
  return {-r, r};
}

}  // namespace act_detail

inline bool has_activation(OpKind k) {
  switch (k) {
    case OpKind::Relu:
    case OpKind::Abs:
    case OpKind::Exp:
    case OpKind::Log:
    case OpKind::Log1p:
    case OpKind::Sigmoid:
      return true;
    default:
      return false;
  }
}

inline const Activation1D& activation(OpKind k) {
  using namespace act_detail;
  static const Activation1D relu_a{OpKind::Relu, Curvature::Convex, relu, relu_d, kink};
  static const Activation1D abs_a{OpKind::Abs, Curvature::Convex, fabs_, abs_d, kink};
  static const Activation1D exp_a{OpKind::Exp, Curvature::Convex, fexp, dexp, exp_pts};
  static const Activation1D log_a{OpKind::Log, Curvature::Concave, flog, dlog, log_pts};
  static const Activation1D log1p_a{OpKind::Log1p, Curvature::Concave, flog1p, dlog1p, log1p_pts};
  static const Activation1D sig_a{OpKind::Sigmoid, Curvature::Nonconvex, sigmoid, sig_d, sigmoid_pts};
  switch (k) {
    case OpKind::Relu: return relu_a;
    case OpKind::Abs: return abs_a;
    case OpKind::Exp: return exp_a;
    case OpKind::Log: return log_a;
    case OpKind::Log1p: return log1p_a;
    case OpKind::Sigmoid: return sig_a;
    default: break;
  }
  throw UnsupportedOpError(std::string(name_of(k)), "no 1D activation transformer");
}

/// The band {(x, y) : x ∈ [l, u], μx + k_lo ≤ y ≤ μx + k_hi} enclosing the
/// graph of f over [l, u].
struct Parallelogram {
  double mu = 0;
  double k_lo = 0;
  double k_hi = 0;
  double height = 0;    // k_hi − k_lo
  double center_y = 0;  // μ·(l+u)/2 + (k_lo+k_hi)/2
};

inline Parallelogram parallelogram(const Activation1D& a, double l, double u) {
  if (!(l <= u)) throw ContractError("parallelogram: lower bound exceeds upper bound");
  if (a.kind == OpKind::Log && !(l > 0)) throw DomainError("Log transformer: interval reaches " + std::to_string(l));
  if (a.kind == OpKind::Log1p && !(l > -1)) throw DomainError("Log1p transformer: interval reaches " + std::to_string(l));
  const double fl = a.f(l), fu = a.f(u);
  const double mu = (fu - fl) / std::max(u - l, 1e-12);
  std::vector<double> xs{l, u};
  for (double x : a.tangent_points(mu)) xs.push_back(std::clamp(x, l, u));
  double lo = INFINITY, hi = -INFINITY;
  for (double x : xs) {
    const double g = a.f(x) - mu * x;
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  return {mu, lo, hi, hi - lo, mu * 0.5 * (l + u) + 0.5 * (lo + hi)};
}

/// The closed-form height read directly off the published construction,
/// x_f(μ)·μ − (f(l)·u + l·f(u))/(u − l). It agrees with the chord-minus-
/// function height for Relu; it is kept only so tests can report where the
/// two disagree.
inline double literal_height(const Activation1D& a, double l, double u) {
  const double mu = (a.f(u) - a.f(l)) / (u - l);
  const double xf = std::clamp(a.tangent_points(mu).front(), l, u);
  return xf * mu - (a.f(l) * u + l * a.f(u)) / (u - l);
}

namespace sym {

inline TensorId apply(Builder& B, OpKind k, TensorId x) { return B.op(k, {x}); }

inline std::vector<TensorId> tangent_points(Builder& B, OpKind k, TensorId mu, TensorId like) {
  const TensorId tiny = B.scalar(act_detail::kTinySlope);
  switch (k) {
    case OpKind::Relu:
    case OpKind::Abs:
      return {B.zeros_like(like)};
    case OpKind::Exp:
      return {B.log(B.maximum(mu, tiny))};
    case OpKind::Log:
      return {B.div(B.ones_like(like), B.maximum(mu, tiny))};
    case OpKind::Log1p:
      return {B.sub(B.div(B.ones_like(like), B.maximum(mu, tiny)), B.scalar(1.0))};
    case OpKind::Sigmoid: {
      const TensorId m = B.maximum(mu, tiny);
      const TensorId disc = B.maximum(B.sub(B.scalar(1.0), B.mul(m, 4.0)), tiny);
      const TensorId root = B.exp(B.mul(B.log(disc), 0.5));
      const TensorId y_plus = B.div(B.add(B.sub(B.scalar(1.0), B.mul(m, 2.0)), root), B.mul(m, 2.0));
      const TensorId r = B.log(y_plus);
      return {B.neg(r), r};
    }
    default:
      break;
  }
  throw UnsupportedOpError(std::string(name_of(k)), "no 1D activation transformer");
}

/// Coordinatewise activation transformer. Box inputs get the interval image;
/// hybrid zonotopes get the slope-μ parallelogram with E scaled by μ.
inline SymElement lift_activation(Builder& B, OpKind k, const SymElement& x) {
  activation(k);
  auto [l, u] = lower_upper(B, x);
  if (x.domain == Domain::Box) {
    if (k == OpKind::Abs) {
      const TensorId lo = B.relu(B.maximum(l, B.neg(u)));
      const TensorId hi = B.maximum(B.neg(l), u);
      return from_interval(B, Domain::Box, lo, hi);
    }
    return from_interval(B, Domain::Box, apply(B, k, l), apply(B, k, u));
  }

  const TensorId fl = apply(B, k, l);
  const TensorId fu = apply(B, k, u);
  const TensorId mu = B.div(B.sub(fu, fl), B.maximum(B.sub(u, l), 1e-12));
  std::vector<TensorId> offsets{B.sub(fl, B.mul(mu, l)), B.sub(fu, B.mul(mu, u))};
  for (TensorId t : tangent_points(B, k, mu, x.c)) {
    const TensorId xc = B.clamp(t, l, u);
    offsets.push_back(B.sub(apply(B, k, xc), B.mul(mu, xc)));
  }
  TensorId k_lo = offsets[0], k_hi = offsets[0];
  for (std::size_t i = 1; i < offsets.size(); ++i) {
    k_lo = B.minimum(k_lo, offsets[i]);
    k_hi = B.maximum(k_hi, offsets[i]);
  }
  const TensorId height = B.sub(k_hi, k_lo);
  const TensorId slope_mag = k == OpKind::Abs ? B.abs(mu) : mu;

  SymElement y{Domain::HybridZonotope, B.add(B.mul(mu, x.c), B.mul(B.add(k_lo, k_hi), 0.5)),
               B.add(B.mul(slope_mag, x.b), B.mul(height, 0.5)), std::nullopt, x.origin};
  if (x.E) y.E = B.mul(*x.E, mu);
  return y;
}

}  // namespace sym

}  // namespace zonotrain
