#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "zonotrain/domains.hpp"

namespace zonotrain {

/// The perturbation a property allows around one example: an independent
/// per-coordinate radius plus an optional stack of shared generators
/// [e, ...example_shape].
struct PerturbationSet {
  Tensor radius;
  std::optional<Tensor> generators;
};

/// Input-region constructor. Subclasses describe the region for a single
/// example; `of` and `attach` replicate it across a batch.
class Property {
 public:
  explicit Property(double epsilon) : epsilon_(epsilon) {
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw ContractError("property radius must be finite and >= 0");
  }
  virtual ~Property() = default;

  virtual std::string kind() const = 0;
  virtual std::vector<Domain> supported_domains() const = 0;
  virtual PerturbationSet generate(const Shape& example_shape) const = 0;

  double epsilon() const noexcept { return epsilon_; }

  bool supports(Domain d) const {
    const auto ds = supported_domains();
    return std::find(ds.begin(), ds.end(), d) != ds.end();
  }

 protected:
  double epsilon_;
};

namespace detail {

inline void require_support(const Property& p, Domain d) {
  if (!p.supports(d)) {
    throw PropertyDomainError("property " + p.kind() + " does not support the " + std::string(name_of(d)) + " domain");
  }
}

inline Shape example_shape_of(const Shape& batch_shape) {
  if (batch_shape.empty()) throw DimensionError("property input needs a leading batch axis");
  return Shape(batch_shape.begin() + 1, batch_shape.end());
}

inline PerturbationSet checked_generate(const Property& p, const Shape& ex) {
  PerturbationSet s = p.generate(ex);
  if (s.radius.shape() != ex) throw DimensionError("property " + p.kind() + " produced a radius of the wrong shape");
  if (s.generators) {
    Shape gs = ex;
    gs.insert(gs.begin(), s.generators->shape().empty() ? 0 : s.generators->shape()[0]);
    if (s.generators->shape() != gs) throw DimensionError("property " + p.kind() + " produced generators of the wrong shape");
    if (gs[0] == 0) s.generators.reset();
  }
  return s;
}

}  // namespace detail

/// The property's region around every example of the batch `x` [N, ...].
inline Element of(const Property& p, Domain d, const Tensor& x) {
  detail::require_support(p, d);
  const Shape ex = detail::example_shape_of(x.shape());
  const PerturbationSet s = detail::checked_generate(p, ex);
  if (d == Domain::Box && s.generators) {
    throw PropertyDomainError("property " + p.kind() + " needs generators, which Box cannot hold");
  }
  const std::size_t n = x.shape()[0];
  const std::size_t per = element_count(ex);
  Tensor b(x.shape());
  for (std::size_t i = 0; i < n; ++i) std::copy_n(s.radius.data().begin(), per, b.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  if (d == Domain::Box) return make_box(x, std::move(b));
  std::optional<Tensor> E;
  if (s.generators) {
    const std::size_t e = s.generators->shape()[0];
    Shape es = x.shape();
    es.insert(es.begin(), e);
    Tensor full(es);
    for (std::size_t k = 0; k < e; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(s.generators->data().begin() + static_cast<std::ptrdiff_t>(k * per), per,
                    full.data().begin() + static_cast<std::ptrdiff_t>((k * n + i) * per));
      }
    }
    E = std::move(full);
  }
  return make_hz(x, std::move(b), std::move(E));
}

/// Graph form of `of`: the element is centered on the tensor `x` itself.
inline SymElement attach(Builder& B, const Property& p, Domain d, TensorId x) {
  detail::require_support(p, d);
  const Shape ex = detail::example_shape_of(B.shape(x));
  PerturbationSet s = detail::checked_generate(p, ex);
  if (d == Domain::Box && s.generators) {
    throw PropertyDomainError("property " + p.kind() + " needs generators, which Box cannot hold");
  }
  Shape one = ex;
  one.insert(one.begin(), 1);
  const TensorId zeros = B.zeros_like(x);
  SymElement out{d, x, B.add(zeros, B.constant(s.radius.reshaped(one))), std::nullopt, 0};
  if (s.generators) {
    Shape gs = one;
    gs.insert(gs.begin(), s.generators->shape()[0]);
    out.E = B.add(B.constant(s.generators->reshaped(gs)), zeros);
    out.origin = fresh_origin();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in properties

/// L∞ ball as an axis-aligned box: b = ε·1.
class BallDemoted : public Property {
 public:
  using Property::Property;
  std::string kind() const override { return "BallDemoted"; }
  std::vector<Domain> supported_domains() const override { return {Domain::Box, Domain::HybridZonotope}; }
  PerturbationSet generate(const Shape& ex) const override { return {Tensor(ex, epsilon_), std::nullopt}; }
};

/// L∞ ball with one generator per coordinate, E = ε·I.
class BallPromoted : public Property {
 public:
  using Property::Property;
  std::string kind() const override { return "BallPromoted"; }
  std::vector<Domain> supported_domains() const override { return {Domain::HybridZonotope}; }
  PerturbationSet generate(const Shape& ex) const override {
    const std::size_t p = element_count(ex);
    Shape gs = ex;
    gs.insert(gs.begin(), p);
    Tensor g(gs, 0.0);
    for (std::size_t i = 0; i < p; ++i) g[i * p + i] = epsilon_;
    return {Tensor(ex, 0.0), std::move(g)};
  }
};

/// A single generator adding the same offset t ∈ [−ε, ε] to every value.
class Brightness : public Property {
 public:
  using Property::Property;
  std::string kind() const override { return "Brightness"; }
  std::vector<Domain> supported_domains() const override { return {Domain::HybridZonotope}; }
  PerturbationSet generate(const Shape& ex) const override {
    Shape gs = ex;
    gs.insert(gs.begin(), 1);
    return {Tensor(ex, 0.0), Tensor(gs, epsilon_)};
  }
};

/// One generator per channel (last axis), each shifting that channel only.
class UniformChannel : public Property {
 public:
  using Property::Property;
  std::string kind() const override { return "UniformChannel"; }
  std::vector<Domain> supported_domains() const override { return {Domain::HybridZonotope}; }
  PerturbationSet generate(const Shape& ex) const override {
    if (ex.empty()) throw DimensionError("UniformChannel needs a channel axis");
    const std::size_t channels = ex.back();
    const std::size_t p = element_count(ex);
    Shape gs = ex;
    gs.insert(gs.begin(), channels);
    Tensor g(gs, 0.0);
    for (std::size_t k = 0; k < channels; ++k) {
      for (std::size_t i = k; i < p; i += channels) g[k * p + i] = epsilon_;
    }
    return {Tensor(ex, 0.0), std::move(g)};
  }
};

/// Plane waves ε·κ(2π(i·n/H + j·m/W)) for κ ∈ {sin, cos}, n ∈ [−N, N],
/// m ∈ [−M, M], identical across channels. Pixel (0, 0) is the top-left.
/// Waves that vanish everywhere (below 1e-12) are dropped.
class Fourier : public Property {
 public:
  Fourier(double epsilon, int n_max, int m_max) : Property(epsilon), n_(n_max), m_(m_max) {
    if (n_max < 0 || m_max < 0) throw ContractError("Fourier frequency cutoffs must be >= 0");
  }
  std::string kind() const override { return "Fourier"; }
  std::vector<Domain> supported_domains() const override { return {Domain::HybridZonotope}; }
  int n_max() const noexcept { return n_; }
  int m_max() const noexcept { return m_; }

  PerturbationSet generate(const Shape& ex) const override {
    if (ex.size() != 3) throw DimensionError("Fourier expects [H, W, C] examples");
    const std::size_t H = ex[0], W = ex[1], C = ex[2];
    const std::size_t p = H * W * C;
    std::vector<double> data;
    std::size_t count = 0;
    const double two_pi = 2.0 * std::numbers::pi;
    for (int n = -n_; n <= n_; ++n) {
      for (int m = -m_; m <= m_; ++m) {
        for (int wave = 0; wave < 2; ++wave) {
          std::vector<double> g(p);
          double peak = 0;
          for (std::size_t i = 0; i < H; ++i) {
            for (std::size_t j = 0; j < W; ++j) {
              const double phase = two_pi * (static_cast<double>(i) * n / static_cast<double>(H) +
                                             static_cast<double>(j) * m / static_cast<double>(W));
              const double v = epsilon_ * (wave == 0 ? std::sin(phase) : std::cos(phase));
              peak = std::max(peak, std::abs(v));
              for (std::size_t c = 0; c < C; ++c) g[(i * W + j) * C + c] = v;
            }
          }
          if (peak < 1e-12) continue;
          data.insert(data.end(), g.begin(), g.end());
          ++count;
        }
      }
    }
    Shape gs = ex;
    gs.insert(gs.begin(), count);
    return {Tensor(ex, 0.0), Tensor(gs, std::move(data))};
  }

 private:
  int n_;
  int m_;
};

// ---------------------------------------------------------------------------
// Registry

struct PropertyParams {
  double epsilon = 0;
  int n = 0;
  int m = 0;
};

using PropertyFactory = std::function<std::unique_ptr<Property>(const PropertyParams&)>;

inline std::map<std::string, PropertyFactory>& property_registry() {
  static std::map<std::string, PropertyFactory> reg = {
      {"BallDemoted", [](const PropertyParams& p) { return std::make_unique<BallDemoted>(p.epsilon); }},
      {"BallPromoted", [](const PropertyParams& p) { return std::make_unique<BallPromoted>(p.epsilon); }},
      {"Brightness", [](const PropertyParams& p) { return std::make_unique<Brightness>(p.epsilon); }},
      {"UniformChannel", [](const PropertyParams& p) { return std::make_unique<UniformChannel>(p.epsilon); }},
      {"Fourier", [](const PropertyParams& p) { return std::make_unique<Fourier>(p.epsilon, p.n, p.m); }},
  };
  return reg;
}

/// Makes a custom property available by name (for configs and the CLI).
inline void register_property(const std::string& name, PropertyFactory factory) {
  property_registry()[name] = std::move(factory);
}

inline std::unique_ptr<Property> make_property(const std::string& name, const PropertyParams& params) {
  auto& reg = property_registry();
  auto it = reg.find(name);
  if (it == reg.end()) throw ConfigError("unknown property '" + name + "'");
  return it->second(params);
}

}  // namespace zonotrain
