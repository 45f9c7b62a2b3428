#include <gtest/gtest.h>

#include "../support/testkit.hpp"

using namespace zonotrain;

namespace {

double sigma(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double sigma_d(double x) { return sigma(x) * (1.0 - sigma(x)); }

Element interval_hz(double l, double u) {
  return make_hz(Tensor::vector({0.5 * (l + u)}), Tensor::vector({0.5 * (u - l)}));
}

// Random interval inside the function's domain.
std::pair<double, double> random_interval(std::mt19937_64& rng, OpKind k) {
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  double a = u(rng), b = u(rng);
  if (k == OpKind::Log) a = std::abs(a) + 0.01, b = std::abs(b) + 0.01;
  if (k == OpKind::Log1p) a = std::abs(a) - 0.99, b = std::abs(b) - 0.99;
  return {std::min(a, b), std::max(a, b)};
}

const OpKind kAll[] = {OpKind::Relu, OpKind::Abs, OpKind::Exp, OpKind::Log, OpKind::Log1p, OpKind::Sigmoid};

}  // namespace

TEST(Relu, WorkedCase) {
  const Element y = lift_activation(OpKind::Relu, interval_hz(-2, 2));
  EXPECT_EQ(y.c[0], 0.5);
  EXPECT_EQ(y.b[0], 1.5);
  const auto p = parallelogram(activation(OpKind::Relu), -2, 2);
  EXPECT_EQ(p.mu, 0.5);
  EXPECT_EQ(p.height, 1.0);
  EXPECT_EQ(p.center_y, 0.5);
}

TEST(Relu, LinearRegionIsExact) {
  const Element y = lift_activation(OpKind::Relu, interval_hz(1, 3));
  EXPECT_EQ(y.c[0], 2);
  EXPECT_EQ(y.b[0], 1);
  const Element z = lift_activation(OpKind::Relu, interval_hz(-3, -1));
  EXPECT_EQ(z.c[0], 0);
  EXPECT_EQ(z.b[0], 0);
}

TEST(Relu, GeneratorCarriedWidth) {
  const Element y = lift_activation(OpKind::Relu, make_hz(Tensor::vector({0}), Tensor::vector({0}), Tensor({1, 1}, 2.0)));
  EXPECT_EQ(y.c[0], 0.5);
  EXPECT_EQ(y.b[0], 0.5);
  EXPECT_EQ((*y.E)[0], 1.0);
}

TEST(Relu, ClosedFormHeight) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> neg(-10.0, -1e-3), pos(1e-3, 10.0);
  for (int i = 0; i < 10000; ++i) {
    const double l = neg(rng), u = pos(rng);
    const double want = -l * u / (u - l);
    EXPECT_NEAR(parallelogram(activation(OpKind::Relu), l, u).height, want, 1e-12);
    EXPECT_NEAR(literal_height(activation(OpKind::Relu), l, u), want, 1e-12);
  }
}

TEST(Relu, BoxUsesIntervalImage) {
  const Element y = lift_activation(OpKind::Relu, make_box(Tensor::vector({0}), Tensor::vector({2})));
  EXPECT_EQ(y.c[0], 1);
  EXPECT_EQ(y.b[0], 1);
}

TEST(Sigmoid, TangencyOfExtrema) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int i = 0; i < 1000; ++i) {
    double l = u(rng), h = u(rng);
    if (l > h) std::swap(l, h);
    if (h - l < 1e-6) continue;
    const double mu = (sigma(h) - sigma(l)) / (h - l);
    for (double x : activation(OpKind::Sigmoid).tangent_points(mu)) EXPECT_LE(std::abs(sigma_d(x) - mu), 1e-8);
  }
}

TEST(Sigmoid, SymmetricIntervalExtrema) {
  const double mu = (sigma(3) - sigma(-3)) / 6;
  EXPECT_NEAR(mu, 0.15085, 1e-5);
  const auto pts = activation(OpKind::Sigmoid).tangent_points(mu);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_NEAR(pts[0], -1.48, 0.01);
  EXPECT_NEAR(pts[1], 1.48, 0.01);
}

TEST(Sigmoid, PointAndNarrowIntervals) {
  const Element p = lift_activation(OpKind::Sigmoid, interval_hz(0.7, 0.7));
  EXPECT_DOUBLE_EQ(p.c[0], sigma(0.7));
  EXPECT_EQ(p.b[0], 0.0);
  const double t = 1e-3;
  const Element y = lift_activation(OpKind::Sigmoid, interval_hz(-t, t));
  EXPECT_NEAR(y.b[0], 0.25 * t, 1e-4);
  EXPECT_LE(y.c[0] - y.b[0], sigma(-t));
  EXPECT_GE(y.c[0] + y.b[0], sigma(t));
}

TEST(Exp, UnitIntervalContainmentAndLiteralFormula) {
  const auto& a = activation(OpKind::Exp);
  const auto p = parallelogram(a, 0, 1);
  EXPECT_NEAR(p.mu, std::exp(1.0) - 1, 1e-15);
  EXPECT_NEAR(a.tangent_points(p.mu)[0], 0.54133, 1e-5);
  for (int i = 0; i <= 1000; ++i) {
    const double x = i / 1000.0;
    const double off = std::exp(x) - (p.center_y + p.mu * (x - 0.5));
    EXPECT_LE(std::abs(off), p.height / 2 + 1e-9);
  }
  // The chord-minus-tangent height is positive; the literally transcribed
  // formula is not, which is why it is not used.
  EXPECT_GT(p.height, 0.2);
  EXPECT_LT(literal_height(a, 0, 1), 0.0);
}

TEST(Abs, ContainmentOnStraddlingInterval) {
  const auto p = parallelogram(activation(OpKind::Abs), -1, 3);
  EXPECT_EQ(p.mu, 0.5);
  for (int i = 0; i <= 400; ++i) {
    const double x = -1 + i / 100.0;
    EXPECT_LE(std::abs(std::abs(x) - (p.center_y + p.mu * (x - 1))), p.height / 2 + 1e-9);
  }
}

TEST(Activations, ContainmentOnRandomIntervals) {
  std::mt19937_64 rng(43);
  for (auto k : kAll) {
    const auto& a = activation(k);
    for (int i = 0; i < 1000; ++i) {
      const auto [l, u] = random_interval(rng, k);
      const Element y = lift_activation(k, interval_hz(l, u));
      const double c = 0.5 * (l + u);
      const auto p = parallelogram(a, l, u);
      for (int s = 0; s <= 20; ++s) {
        const double x = l + (u - l) * s / 20.0;
        EXPECT_LE(std::abs(a.f(x) - (p.center_y + p.mu * (x - c))), p.height / 2 + 1e-9) << name_of(k);
        EXPECT_GE(a.f(x), y.c[0] - y.b[0] - 1e-9 * std::max(1.0, std::abs(a.f(x)))) << name_of(k);
        EXPECT_LE(a.f(x), y.c[0] + y.b[0] + 1e-9 * std::max(1.0, std::abs(a.f(x)))) << name_of(k);
      }
    }
  }
}

TEST(Activations, GraphFormMatchesScalarReference) {
  std::mt19937_64 rng(44);
  for (auto k : kAll) {
    for (int i = 0; i < 200; ++i) {
      const auto [l, u] = random_interval(rng, k);
      const auto p = parallelogram(activation(k), l, u);
      const Element y = lift_activation(k, interval_hz(l, u));
      const double slope_b = (k == OpKind::Abs ? std::abs(p.mu) : p.mu) * 0.5 * (u - l);
      EXPECT_NEAR(y.c[0], p.center_y, 1e-9 * std::max(1.0, std::abs(p.center_y))) << name_of(k);
      EXPECT_NEAR(y.b[0], slope_b + 0.5 * p.height, 1e-9 * std::max(1.0, y.b[0])) << name_of(k);
    }
  }
}

TEST(Activations, GeneratorsScaleBySlope) {
  for (auto k : kAll) {
    Element x = make_hz(Tensor::vector({k == OpKind::Log ? 2.0 : 0.3}), Tensor::vector({0.2}), Tensor({2, 1}, {0.3, -0.1}));
    const Element y = lift_activation(k, x);
    const auto [l, u] = testkit::hull(x);
    const double mu = parallelogram(activation(k), l[0], u[0]).mu;
    EXPECT_EQ(y.origin, x.origin);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR((*y.E)[i], (*x.E)[i] * mu, 1e-12) << name_of(k);
  }
}

TEST(Activations, HeightIsMonotoneUnderNesting) {
  std::mt19937_64 rng(46);
  std::uniform_real_distribution<double> grow(0.0, 1.0);
  for (auto k : kAll) {
    for (int i = 0; i < 300; ++i) {
      const auto [l, u] = random_interval(rng, k);
      double L = l - grow(rng), U = u + grow(rng);
      if (k == OpKind::Log) L = std::max(L, l / 2);
      if (k == OpKind::Log1p) L = std::max(L, (l - 1) / 2);
      EXPECT_GE(parallelogram(activation(k), L, U).height + 1e-12, parallelogram(activation(k), l, u).height) << name_of(k);
    }
  }
}

TEST(Activations, DomainAndRegistryErrors) {
  EXPECT_THROW(parallelogram(activation(OpKind::Log), -1, 1), DomainError);
  EXPECT_THROW(parallelogram(activation(OpKind::Log1p), -1, 1), DomainError);
  EXPECT_THROW(lift_activation(OpKind::Log, interval_hz(-1, 1)), DomainError);
  EXPECT_THROW(activation(OpKind::Softmax), UnsupportedOpError);
}
