#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "zonotrain/autodiff.hpp"
#include "zonotrain/builder.hpp"

namespace zonotrain {

/// A classifier graph with one input [N, ...] and one logits output [N, K].
struct Model {
  Graph graph;
  TensorId input;
  TensorId logits;

  /// Recovers the roles from a graph with exactly one input and one output,
  /// which is how every builder here and every checkpoint lays them out.
  static Model from_graph(Graph g) {
    if (g.inputs().size() != 1 || g.outputs().size() != 1) {
      throw StructureError("model graph needs exactly one input and one output");
    }
    Model m{std::move(g), {}, {}};
    m.input = m.graph.inputs()[0];
    m.logits = m.graph.outputs()[0];
    if (m.graph.shape(m.logits).size() != 2) throw DimensionError("model output must be [N, classes]");
    return m;
  }

  std::size_t classes() const { return graph.shape(logits)[1]; }
};

namespace arch_detail {

class LayerStack {
 public:
  explicit LayerStack(Graph& g) : B_(g) {}

  TensorId dense(TensorId x, std::size_t units, const std::string& name) {
    if (B_.rank(x) != 2) x = flatten(x);
    const std::size_t in = B_.shape(x)[1];
    const TensorId w = B_.graph().add_variable(name + "/kernel", {in, units});
    const TensorId b = B_.graph().add_variable(name + "/bias", {units});
    return B_.op(OpKind::BiasAdd, {B_.op(OpKind::MatMul, {x, w}), b});
  }

  TensorId conv(TensorId x, std::size_t filters, std::size_t k, std::int64_t stride, std::int64_t pad,
                const std::string& name) {
    const std::size_t c = B_.shape(x).at(3);
    const TensorId w = B_.graph().add_variable(name + "/kernel", {k, k, c, filters});
    const TensorId b = B_.graph().add_variable(name + "/bias", {filters});
    return B_.op(OpKind::BiasAdd, {B_.op(OpKind::Conv2D, {x, w}, conv_attrs(stride, pad)), b});
  }

  TensorId relu(TensorId x) { return B_.relu(x); }

  TensorId flatten(TensorId x) {
    const Shape& s = B_.shape(x);
    const auto per = static_cast<std::int64_t>(element_count(Shape(s.begin() + 1, s.end())));
    return B_.op(OpKind::Reshape, {x}, reshape_attrs({-1, per}));
  }

  Builder& builder() { return B_; }

 private:
  Builder B_;
};

struct ConvSpec {
  std::size_t filters;
  std::size_t kernel;
  std::int64_t stride;
};

inline TensorId conv_stack(LayerStack& L, TensorId x, const std::vector<ConvSpec>& specs, std::int64_t pad,
                           const std::string& prefix) {
  for (std::size_t i = 0; i < specs.size(); ++i) {
    x = L.relu(L.conv(x, specs[i].filters, specs[i].kernel, specs[i].stride, pad, prefix + "conv" + std::to_string(i)));
  }
  return x;
}

inline TensorId dense_stack(LayerStack& L, TensorId x, const std::vector<std::size_t>& widths, const std::string& prefix) {
  for (std::size_t i = 0; i < widths.size(); ++i) x = L.relu(L.dense(x, widths[i], prefix + "dense" + std::to_string(i)));
  return x;
}

}  // namespace arch_detail

inline const std::vector<std::string>& architecture_names() {
  static const std::vector<std::string> names = {"FFNN", "ConvSmall", "ConvMed", "ConvBig",
                                                 "ConvSuper", "Skip", "FFNN-tiny", "ConvSmall-tiny"};
  return names;
}

/// Builds the named classifier for examples of `input_shape` (without the
/// batch axis). Image architectures expect [H, W, C]. Dense layers after a
/// conv stack see the activations flattened in row-major order.
inline Model build_architecture(const std::string& name, const Shape& input_shape, std::size_t classes,
                                std::size_t batch = 1) {
  using namespace arch_detail;
  if (classes < 2) throw ContractError("build_architecture: need at least two classes");
  Graph g;
  Shape in = input_shape;
  in.insert(in.begin(), batch);
  const TensorId x = g.add_input("x", in);
  LayerStack L(g);

  const bool image = input_shape.size() == 3;
  auto need_image = [&] {
    if (!image) throw DimensionError(name + " expects [H, W, C] examples, got " + to_string(input_shape));
  };

  TensorId h;
  if (name == "FFNN") {
    h = dense_stack(L, x, {100, 100, 100, 100, 100}, "");
  } else if (name == "FFNN-tiny") {
    h = dense_stack(L, x, {32, 32}, "");
  } else if (name == "ConvSmall" || name == "ConvMed") {
    need_image();
    h = conv_stack(L, x, {{16, 4, 2}, {32, 4, 2}}, name == "ConvMed" ? 1 : 0, "");
    h = dense_stack(L, h, {100}, "");
  } else if (name == "ConvSmall-tiny") {
    need_image();
    h = conv_stack(L, x, {{4, 4, 2}, {8, 4, 2}}, 0, "");
    h = dense_stack(L, h, {32}, "");
  } else if (name == "ConvBig") {
    need_image();
    h = conv_stack(L, x, {{32, 3, 1}, {32, 4, 2}, {64, 3, 1}, {64, 4, 2}}, 1, "");
    h = dense_stack(L, h, {512, 512}, "");
  } else if (name == "ConvSuper") {
    need_image();
    h = conv_stack(L, x, {{32, 3, 1}, {32, 4, 1}, {64, 3, 1}, {64, 4, 1}}, 0, "");
    h = dense_stack(L, h, {512, 512}, "");
  } else if (name == "Skip") {
    need_image();
    TensorId a = conv_stack(L, x, {{16, 3, 1}, {16, 3, 1}, {32, 3, 1}}, 0, "a/");
    a = L.dense(a, 200, "a/dense0");
    TensorId b = conv_stack(L, x, {{32, 4, 1}, {32, 4, 1}}, 0, "b/");
    b = L.dense(b, 200, "b/dense0");
    h = L.relu(L.builder().op(OpKind::ConcatV2, {a, b}, axis_attrs(1)));
    h = dense_stack(L, h, {200}, "");
  } else {
    throw ConfigError("unknown architecture '" + name + "'");
  }
  const TensorId logits = L.dense(h, classes, "logits");
  g.mark_output(logits);
  return Model::from_graph(std::move(g));
}

inline std::size_t parameter_count(const Graph& g) {
  std::size_t n = 0;
  for (auto v : g.variables()) n += element_count(g.shape(v));
  return n;
}

/// Glorot-uniform kernels and zero biases. Rank-1 variables count as biases;
/// for conv kernels [kh, kw, C, F] the receptive field scales both fans.
inline Weights init_weights(const Graph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Weights w;
  for (auto v : g.variables()) {
    const Shape& s = g.shape(v);
    Tensor t(s, 0.0);
    if (s.size() >= 2) {
      std::size_t field = 1;
      for (std::size_t i = 0; i + 2 < s.size(); ++i) field *= s[i];
      const double fan_in = static_cast<double>(field * s[s.size() - 2]);
      const double fan_out = static_cast<double>(field * s.back());
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& x : t.data()) x = limit * u(rng);
    }
    w.push_back(std::move(t));
  }
  return w;
}

}  // namespace zonotrain
