#include <gtest/gtest.h>

#include "../support/testkit.hpp"

using namespace zonotrain;
using testkit::random_tensor;

namespace {

Tensor eval1(OpKind k, const Tensor& a, const Attrs& attrs = {}) { return evaluate_op(k, {&a}, attrs); }
Tensor eval2(OpKind k, const Tensor& a, const Tensor& b, const Attrs& attrs = {}) { return evaluate_op(k, {&a, &b}, attrs); }

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  const Tensor t = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(t.at({1, 0}), 3);
  EXPECT_EQ(t.size(), 4u);
}

TEST(MatMul, IdentityLeavesColumn) {
  const Tensor I = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor v = Tensor::matrix({{3}, {4}});
  EXPECT_EQ(matmul(I, v), v);
}

TEST(MatMul, HandComputedProduct) {
  EXPECT_EQ(matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5}, {6}})), Tensor::matrix({{17}, {39}}));
}

TEST(MatMul, ZeroAnnihilates) {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor(rng, {3, 5});
  EXPECT_EQ(matmul(a, Tensor::zeros({5, 2})), Tensor::zeros({3, 2}));
  EXPECT_THROW(matmul(a, Tensor::zeros({4, 2})), DimensionError);
}

TEST(Conv2D, OnesKernelOnOnes) {
  const Tensor out = eval2(OpKind::Conv2D, Tensor::ones({1, 3, 3, 1}), Tensor::ones({2, 2, 1, 1}), conv_attrs(1, 0));
  EXPECT_EQ(out, Tensor({1, 2, 2, 1}, 4.0));
}

TEST(Conv2D, UnitKernelIsIdentity) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor(rng, {2, 5, 4, 3});
  Tensor k({1, 1, 3, 3}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) k.at({0, 0, c, c}) = 1.0;
  EXPECT_EQ(eval2(OpKind::Conv2D, x, k, conv_attrs(1, 0)), x);
}

TEST(Conv2D, FullKernelIsDotProduct) {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, {1, 4, 4, 1});
  const Tensor k = random_tensor(rng, {4, 4, 1, 1});
  double dot = 0;
  for (std::size_t i = 0; i < 16; ++i) dot += x[i] * k[i];
  const Tensor out = eval2(OpKind::Conv2D, x, k, conv_attrs(2, 0));
  ASSERT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_NEAR(out[0], dot, 1e-12);
}

TEST(Conv2D, AgreesWithLoopOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t k = testkit::random_extent(rng, 1, 4), stride = testkit::random_extent(rng, 1, 3),
                      pad = testkit::random_extent(rng, 0, 1);
    const std::size_t H = testkit::random_extent(rng, k, 9), W = testkit::random_extent(rng, k, 9);
    const Tensor x = random_tensor(rng, {2, H, W, testkit::random_extent(rng, 1, 3)});
    const Tensor kern = random_tensor(rng, {k, k, x.shape()[3], testkit::random_extent(rng, 1, 4)});
    const Tensor got = eval2(OpKind::Conv2D, x, kern, conv_attrs(static_cast<std::int64_t>(stride), static_cast<std::int64_t>(pad)));
    const Tensor want = testkit::loop_conv(x, kern, stride, pad);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LE(testkit::rel_err(got[i], want[i], 1.0), 1e-9);
  }
}

TEST(Conv2D, ChannelMismatchIsDimensionError) {
  EXPECT_THROW(eval2(OpKind::Conv2D, Tensor::ones({1, 3, 3, 2}), Tensor::ones({2, 2, 1, 1}), conv_attrs(1, 0)),
               DimensionError);
}

TEST(Pointwise, Examples) {
  EXPECT_EQ(eval1(OpKind::Relu, Tensor::vector({-2, 0, 3})), Tensor::vector({0, 0, 3}));
  EXPECT_EQ(eval1(OpKind::Sigmoid, Tensor::scalar(0)).item(), 0.5);
  const Tensor e = eval1(OpKind::Exp, Tensor::vector({0, 1}));
  EXPECT_EQ(e[0], 1.0);
  EXPECT_DOUBLE_EQ(e[1], std::exp(1.0));
  EXPECT_EQ(eval2(OpKind::GreaterEqual, Tensor::vector({1, 2, 3}), Tensor::scalar(2)), Tensor::vector({0, 1, 1}));
  const Tensor m = Tensor::vector({1, 0, 2});
  const Tensor a = Tensor::vector({10, 20, 30});
  const Tensor b = Tensor::vector({-1, -2, -3});
  EXPECT_EQ(evaluate_op(OpKind::Select, {&m, &a, &b}), Tensor::vector({10, -2, 30}));
}

TEST(Pointwise, DomainErrors) {
  EXPECT_THROW(eval1(OpKind::Log, Tensor::vector({1, 0})), DomainError);
  EXPECT_THROW(eval1(OpKind::Log1p, Tensor::vector({-1})), DomainError);
  EXPECT_THROW(eval2(OpKind::RealDiv, Tensor::vector({1}), Tensor::vector({0})), DomainError);
}

TEST(Pointwise, BroadcastMatchesExplicitExpansion) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = testkit::random_extent(rng, 1, 4), c = testkit::random_extent(rng, 1, 4);
    const Tensor a = random_tensor(rng, {r, c});
    const bool row = trial % 2 == 0;
    const Tensor b = random_tensor(rng, row ? Shape{c} : Shape{r, 1});
    const Tensor got = eval2(OpKind::Add, a, b);
    Tensor want(Shape{r, c});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) want.at({i, j}) = a.at({i, j}) + (row ? b[j] : b[i]);
    EXPECT_EQ(got, want);
  }
  EXPECT_THROW(eval2(OpKind::Add, Tensor::ones({2, 3}), Tensor::ones({2})), DimensionError);
}

TEST(Structural, Examples) {
  EXPECT_EQ(eval1(OpKind::Reshape, Tensor::vector({1, 2, 3, 4}), reshape_attrs({2, 2})), Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(eval1(OpKind::MaxPool2, Tensor({1, 2, 2, 1}, {1, 2, 3, 4})), Tensor({1, 1, 1, 1}, 4.0));
  EXPECT_EQ(eval1(OpKind::Softmax, Tensor::vector({0, 0})), Tensor::vector({0.5, 0.5}));
  EXPECT_EQ(eval1(OpKind::Shape, Tensor::ones({2, 3, 4})), Tensor::vector({2, 3, 4}));
  EXPECT_EQ(eval1(OpKind::Transpose, Tensor::matrix({{1, 2, 3}}), perm_attrs({1, 0})), Tensor::matrix({{1}, {2}, {3}}));
  EXPECT_EQ(eval1(OpKind::Sum, Tensor::matrix({{1, 2}, {3, 4}}), reduce_attrs({0})), Tensor::vector({4, 6}));
  EXPECT_EQ(eval1(OpKind::Mean, Tensor::matrix({{1, 2}, {3, 4}}), reduce_attrs({1}, true)), Tensor::matrix({{1.5}, {3.5}}));
  EXPECT_EQ(eval1(OpKind::StridedSlice, Tensor::vector({0, 1, 2, 3, 4, 5}), slice_attrs({1}, {6}, {2})),
            Tensor::vector({1, 3, 5}));
  EXPECT_EQ(eval2(OpKind::ConcatV2, Tensor::matrix({{1}, {2}}), Tensor::matrix({{3}, {4}}), axis_attrs(1)),
            Tensor::matrix({{1, 3}, {2, 4}}));
  EXPECT_EQ(eval2(OpKind::Pack, Tensor::vector({1, 2}), Tensor::vector({3, 4}), axis_attrs(0)),
            Tensor::matrix({{1, 2}, {3, 4}}));
  EXPECT_EQ(eval2(OpKind::BiasAdd, Tensor::matrix({{1, 2}, {3, 4}}), Tensor::vector({10, 20})),
            Tensor::matrix({{11, 22}, {13, 24}}));
}

TEST(Structural, AxisOutOfRange) {
  EXPECT_THROW(eval1(OpKind::Sum, Tensor::ones({2, 2}), reduce_attrs({2})), DimensionError);
  EXPECT_THROW(eval2(OpKind::ConcatV2, Tensor::ones({2}), Tensor::ones({2}), axis_attrs(3)), DimensionError);
}

TEST(Structural, MaxPoolMatchesBlockMaximum) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = testkit::random_extent(rng, 1, 5);
    const Tensor x = random_tensor(rng, {2, 2 * k, 2 * k, 2});
    const Tensor y = eval1(OpKind::MaxPool2, x);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          for (std::size_t c = 0; c < 2; ++c) {
            const double m = std::max({x.at({n, 2 * i, 2 * j, c}), x.at({n, 2 * i + 1, 2 * j, c}),
                                       x.at({n, 2 * i, 2 * j + 1, c}), x.at({n, 2 * i + 1, 2 * j + 1, c})});
            EXPECT_EQ(y.at({n, i, j, c}), m);
          }
  }
}

TEST(Kernels, SparseCrossEntropyIsLogSumExpMinusTarget) {
  const Tensor logits = Tensor::matrix({{1000, 0}, {0, 0}});
  const Tensor labels = Tensor::vector({1, 0});
  const Tensor l = eval2(OpKind::SparseSoftmaxCrossEntropy, logits, labels);
  EXPECT_NEAR(l[0], 1000.0, 1e-9);
  EXPECT_NEAR(l[1], std::log(2.0), 1e-15);
  EXPECT_THROW(eval2(OpKind::SparseSoftmaxCrossEntropy, logits, Tensor::vector({2, 0})), DomainError);
}

TEST(Kernels, RandomValidInputsStayFinite) {
  std::mt19937_64 rng(7);
  for (std::size_t k = 0; k < kOpKindCount; ++k) {
    const auto kind = static_cast<OpKind>(k);
    if (!is_unary_elementwise(kind) && !is_binary_elementwise(kind)) continue;
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor a = random_tensor(rng, {3, 4}, 0.1, 5.0);
      const Tensor b = random_tensor(rng, {4}, 0.1, 5.0);
      const Tensor out = is_unary_elementwise(kind) ? eval1(kind, a) : eval2(kind, a, b);
      for (double v : out.data()) EXPECT_TRUE(std::isfinite(v)) << name_of(kind);
    }
  }
}
