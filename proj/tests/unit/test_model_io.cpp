#include <gtest/gtest.h>

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../support/testkit.hpp"
#include "json.hpp"

using namespace zonotrain;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "zonotrain_model_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  f << bytes;
}

std::string le_doubles(const std::vector<double>& v) {
  std::string out;
  for (double d : v) {
    auto u = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
  }
  return out;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

// Independent IDX reader: raw bytes, big-endian header, no scaling.
struct RawIdx {
  std::vector<std::uint32_t> dims;
  std::vector<unsigned char> data;
};

RawIdx read_idx(const fs::path& p) {
  const std::string b = slurp(p);
  RawIdx r;
  auto be = [&](std::size_t o) {
    return (std::uint32_t(static_cast<unsigned char>(b[o])) << 24) | (std::uint32_t(static_cast<unsigned char>(b[o + 1])) << 16) |
           (std::uint32_t(static_cast<unsigned char>(b[o + 2])) << 8) | std::uint32_t(static_cast<unsigned char>(b[o + 3]));
  };
  const std::size_t ndim = static_cast<unsigned char>(b[3]);
  for (std::size_t d = 0; d < ndim; ++d) r.dims.push_back(be(4 + 4 * d));
  r.data.assign(b.begin() + static_cast<std::ptrdiff_t>(4 + 4 * ndim), b.end());
  return r;
}

std::string idx_bytes(std::uint8_t type_ndim_code, const std::vector<std::uint32_t>& dims, const std::vector<unsigned char>& data) {
  std::string out = {0, 0, 8, static_cast<char>(type_ndim_code)};
  for (auto d : dims) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((d >> s) & 0xff));
  }
  out.append(data.begin(), data.end());
  return out;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(91);
  Graph g;
  const auto x = g.add_input("x", {2, 3});
  const auto w = g.add_variable("w", {3, 4});
  const auto b = g.add_variable("b", {4});
  const auto c = g.add_constant(testkit::random_tensor(rng, {4}), "shift");
  auto h = g.add_op(OpKind::BiasAdd, {g.add_op(OpKind::MatMul, {x, w}), b});
  h = g.add_op(OpKind::Sub, {g.add_op(OpKind::Relu, {h}), c});
  h = g.add_op(OpKind::Sum, {h}, reduce_attrs({1}, true));
  g.add_op(OpKind::Transpose, {h}, perm_attrs({1, 0}));
  g.mark_output(h);
  Weights ws = {testkit::random_tensor(rng, {3, 4}), testkit::random_tensor(rng, {4})};
  ws[0][0] = -0.0;
  ws[0][1] = 5e-324;  // subnormal

  const std::string prefix = scratch("roundtrip").string();
  save_checkpoint(g, ws, prefix);
  const Checkpoint ck = load_checkpoint(prefix);
  EXPECT_TRUE(ck.graph == g);
  ASSERT_EQ(ck.weights.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_TRUE(bitwise_equal(ck.weights[i], ws[i]));

  // The blob is the little-endian doubles of the weights, then the constant.
  std::vector<double> all(ws[0].data().begin(), ws[0].data().end());
  all.insert(all.end(), ws[1].data().begin(), ws[1].data().end());
  const Tensor& cv = *g.info(c).value;
  all.insert(all.end(), cv.data().begin(), cv.data().end());
  EXPECT_EQ(slurp(prefix + ".weights.bin"), le_doubles(all));

  const std::string again = scratch("roundtrip2").string();
  save_checkpoint(ck.graph, ck.weights, again);
  EXPECT_EQ(slurp(prefix + ".weights.bin"), slurp(again + ".weights.bin"));
  auto m1 = nlohmann::json::parse(slurp(prefix + ".manifest.json"));
  auto m2 = nlohmann::json::parse(slurp(again + ".manifest.json"));
  m2["weights_file"] = m1["weights_file"];
  EXPECT_EQ(m1, m2);
}

TEST(Checkpoint, ArchitectureRoundTripPreservesOutputs) {
  std::mt19937_64 rng(92);
  const Model m = build_architecture("ConvSmall-tiny", {12, 12, 1}, 4, 2);
  const Weights w = init_weights(m.graph, 5);
  const std::string prefix = scratch("conv").string();
  save_checkpoint(m.graph, w, prefix);
  const Checkpoint ck = load_checkpoint(prefix);
  const Model back = Model::from_graph(ck.graph);
  const Tensor x = testkit::random_tensor(rng, {2, 12, 12, 1}, 0, 1);
  const Feeds f1{{m.input, x}}, f2{{back.input, x}};
  const Tensor a = forward(m.graph, {m.logits}, f1, w).value(m.logits);
  const Tensor b = forward(back.graph, {back.logits}, f2, ck.weights).value(back.logits);
  EXPECT_TRUE(bitwise_equal(a, b));
}

TEST(Checkpoint, HandWrittenFixtureLoads) {
  // Independent writer: x[1,2] · w[2,2] then Relu, with w = [[1, -2], [3, 4]].
  const nlohmann::json manifest = {
      {"format_version", 1},
      {"weights_file", "fixture.weights.bin"},
      {"weights_bytes", 32},
      {"tensors",
       {{{"id", 0}, {"name", "x"}, {"role", "input"}, {"shape", {1, 2}}},
        {{"id", 1}, {"name", "w"}, {"role", "variable"}, {"shape", {2, 2}}, {"slot", 0}},
        {{"id", 2}, {"name", ""}, {"role", "op"}, {"shape", {1, 2}}},
        {{"id", 3}, {"name", ""}, {"role", "op"}, {"shape", {1, 2}}}}},
      {"nodes",
       {{{"op", "MatMul"}, {"inputs", {0, 1}}, {"outputs", {2}}, {"attrs", nlohmann::json::object()}},
        {{"op", "Relu"}, {"inputs", {2}}, {"outputs", {3}}, {"attrs", nlohmann::json::object()}}}},
      {"inputs", {0}},
      {"outputs", {3}},
      {"variables", {{{"name", "w"}, {"tensor", 1}, {"shape", {2, 2}}, {"offset", 0}, {"bytes", 32}}}},
      {"constants", nlohmann::json::array()}};
  const fs::path prefix = scratch("fixture");
  spit(prefix.string() + ".manifest.json", manifest.dump());
  spit(prefix.string() + ".weights.bin", le_doubles({1, -2, 3, 4}));
  const Checkpoint ck = load_checkpoint(prefix.string());
  ASSERT_EQ(ck.graph.node_count(), 2u);
  EXPECT_EQ(ck.graph.node(NodeId{0}).kind, OpKind::MatMul);
  EXPECT_EQ(ck.weights[0], Tensor::matrix({{1, -2}, {3, 4}}));
  const Feeds f{{TensorId{0}, Tensor::matrix({{1, 1}})}};
  EXPECT_EQ(forward(ck.graph, {TensorId{3}}, f, ck.weights).value(TensorId{3}), Tensor::matrix({{4, 2}}));

  auto bad = manifest;
  bad["nodes"][1]["op"] = "Erf";
  spit(prefix.string() + ".manifest.json", bad.dump());
  EXPECT_THROW(load_checkpoint(prefix.string()), UnsupportedOpError);
}

TEST(Checkpoint, CorruptionIsReported) {
  const Model m = build_architecture("FFNN-tiny", {5}, 3, 1);
  const Weights w = init_weights(m.graph, 1);
  const std::string prefix = scratch("corrupt").string();
  save_checkpoint(m.graph, w, prefix);
  const std::string manifest = slurp(prefix + ".manifest.json");
  const std::string blob = slurp(prefix + ".weights.bin");

  auto j = nlohmann::json::parse(manifest);
  j["variables"][1]["offset"] = j["variables"][1]["offset"].get<std::size_t>() + 8;
  spit(prefix + ".manifest.json", j.dump());
  try {
    load_checkpoint(prefix);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("dense0/bias"), std::string::npos) << e.what();
    EXPECT_NE(e.offset(), FormatError::npos);
  }

  spit(prefix + ".manifest.json", manifest);
  spit(prefix + ".weights.bin", blob.substr(0, blob.size() - 8));
  EXPECT_THROW(load_checkpoint(prefix), FormatError);

  spit(prefix + ".weights.bin", blob);
  j = nlohmann::json::parse(manifest);
  j["format_version"] = 2;
  spit(prefix + ".manifest.json", j.dump());
  EXPECT_THROW(load_checkpoint(prefix), FormatError);

  spit(prefix + ".manifest.json", manifest.substr(0, manifest.size() / 2));
  EXPECT_THROW(load_checkpoint(prefix), FormatError);
  EXPECT_THROW(load_checkpoint(scratch("does_not_exist").string()), FormatError);
}

TEST(Idx, FabricatedFileLoads) {
  std::vector<unsigned char> px(4 * 2 * 3);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<unsigned char>(i * 11);
  const fs::path img = scratch("fab-images"), lab = scratch("fab-labels");
  spit(img, idx_bytes(3, {4, 2, 3}, px));
  spit(lab, idx_bytes(1, {4}, {3, 0, 9, 1}));
  const Dataset d = load_mnist_idx(img.string(), lab.string());
  EXPECT_EQ(d.inputs.shape(), (Shape{4, 2, 3, 1}));
  EXPECT_EQ(d.labels, (std::vector<int>{3, 0, 9, 1}));
  for (std::size_t i = 0; i < px.size(); ++i) EXPECT_EQ(d.inputs[i], px[i] / 255.0);
  EXPECT_EQ(d.classes, 10u);

  spit(img, idx_bytes(3, {4, 2, 3}, std::vector<unsigned char>(px.begin(), px.end() - 1)));
  EXPECT_THROW(load_mnist_idx(img.string(), lab.string()), FormatError);
  spit(img, idx_bytes(3, {5, 2, 3}, std::vector<unsigned char>(30)));
  EXPECT_THROW(load_mnist_idx(img.string(), lab.string()), FormatError);
  spit(img, idx_bytes(1, {4}, px));
  EXPECT_THROW(load_mnist_idx(img.string(), lab.string()), FormatError);
}

TEST(Idx, BundledSubsetMatchesRawBytes) {
  const fs::path dir = fs::path(ZT_DATA_DIR) / "mnist-subset";
  for (const auto& [split, n] : {std::pair{std::string("train"), 2000u}, std::pair{std::string("test"), 500u}}) {
    const fs::path img = dir / (split + "-images-idx3-ubyte"), lab = dir / (split + "-labels-idx1-ubyte");
    const Dataset d = load_mnist_idx(img.string(), lab.string());
    const RawIdx ri = read_idx(img), rl = read_idx(lab);
    ASSERT_EQ(ri.dims, (std::vector<std::uint32_t>{n, 28, 28}));
    ASSERT_EQ(rl.dims, (std::vector<std::uint32_t>{n}));
    ASSERT_EQ(d.size(), n);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(d.labels[i], rl.data[i]) << split << " label " << i;
    std::size_t mismatched = 0;
    for (std::size_t i = 0; i < ri.data.size(); ++i) mismatched += d.inputs[i] != ri.data[i] / 255.0;
    EXPECT_EQ(mismatched, 0u);
    std::vector<int> per_class(10, 0);
    for (int y : d.labels) ++per_class[static_cast<std::size_t>(y)];
    for (int c : per_class) EXPECT_EQ(c, static_cast<int>(n / 10)) << split;
  }
}

TEST(Idx, FullMnistTestSetWhenAvailable) {
  const char* env = std::getenv("ZT_MNIST_DIR");
  if (!env) GTEST_SKIP() << "set ZT_MNIST_DIR to a directory holding t10k-images-idx3-ubyte";
  const fs::path dir(env);
  const Dataset d = load_mnist_idx((dir / "t10k-images-idx3-ubyte").string(), (dir / "t10k-labels-idx1-ubyte").string());
  ASSERT_EQ(d.size(), 10000u);
  EXPECT_EQ(std::vector<int>(d.labels.begin(), d.labels.begin() + 10), (std::vector<int>{7, 2, 1, 0, 4, 1, 4, 9, 5, 9}));
}

TEST(Architectures, ParameterCountsAndShapes) {
  EXPECT_EQ(parameter_count(build_architecture("FFNN", {28, 28, 1}, 10).graph), 119910u);
  const Model cs = build_architecture("ConvSmall", {28, 28, 1}, 10);
  std::vector<Shape> conv_out;
  for (const auto& op : cs.graph.nodes()) {
    if (op.kind == OpKind::Conv2D) conv_out.push_back(cs.graph.shape(op.outputs[0]));
  }
  ASSERT_EQ(conv_out.size(), 2u);
  EXPECT_EQ(conv_out[0], (Shape{1, 13, 13, 16}));
  EXPECT_EQ(conv_out[1], (Shape{1, 5, 5, 32}));
  EXPECT_EQ(cs.graph.shape(cs.logits), (Shape{1, 10}));
  EXPECT_THROW(build_architecture("ConvSmall", {784}, 10), DimensionError);
  EXPECT_THROW(build_architecture("Resnet", {784}, 10), ConfigError);
}

TEST(Architectures, SkipHasTwoBranchesJoinedByConcat) {
  const Model m = build_architecture("Skip", {28, 28, 1}, 10);
  std::size_t concats = 0, convs = 0;
  for (const auto& op : m.graph.nodes()) {
    if (op.kind == OpKind::ConcatV2) {
      ++concats;
      EXPECT_EQ(m.graph.shape(op.outputs[0]), (Shape{1, 400}));
      // Both operands must depend on the input through disjoint conv paths.
      for (auto in : op.inputs) EXPECT_NO_THROW(extract_subgraph(m.graph, m.input, in));
    }
    convs += op.kind == OpKind::Conv2D;
  }
  EXPECT_EQ(concats, 1u);
  EXPECT_EQ(convs, 5u);
}

TEST(Architectures, GlorotInitIsDeterministicAndBounded) {
  const Model m = build_architecture("ConvSmall-tiny", {28, 28, 1}, 10);
  const Weights a = init_weights(m.graph, 3), b = init_weights(m.graph, 3), c = init_weights(m.graph, 4);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_NE(a[0], c[0]);
  const auto& vars = m.graph.variables();
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const Shape& s = m.graph.shape(vars[i]);
    if (s.size() == 1) {
      EXPECT_EQ(a[i], Tensor(s, 0.0));
      continue;
    }
    std::size_t field = 1;
    for (std::size_t k = 0; k + 2 < s.size(); ++k) field *= s[k];
    const double limit = std::sqrt(6.0 / double(field * (s[s.size() - 2] + s.back())));
    for (double v : a[i].data()) EXPECT_LE(std::abs(v), limit);
  }
}

TEST(Architectures, EveryImageArchitectureTransformsInBothDomains) {
  std::mt19937_64 rng(94);
  const Tensor x = testkit::random_tensor(rng, {1, 28, 28, 1}, 0, 1);
  for (const std::string name : {"FFNN", "ConvSmall", "ConvMed", "ConvBig", "ConvSuper", "Skip"}) {
    const Model m = build_architecture(name, {28, 28, 1}, 10);
    const Weights w = init_weights(m.graph, 2);
    const Feeds feeds{{m.input, x}};
    const Tensor clean = forward(m.graph, {m.logits}, feeds, w).value(m.logits);
    for (Domain dom : {Domain::Box, Domain::HybridZonotope}) {
      const auto out = transform_eager(m.graph, m.input, of(BallDemoted(0.005), dom, x), {m.logits}, w);
      ASSERT_TRUE(out[0]) << name;
      const auto [lo, hi] = testkit::hull(*out[0]);
      for (std::size_t k = 0; k < 10; ++k) {
        EXPECT_LE(lo[k], clean[k] + 1e-9) << name << "/" << name_of(dom);
        EXPECT_GE(hi[k], clean[k] - 1e-9) << name << "/" << name_of(dom);
      }
    }
  }
}

TEST(Data, SyntheticBlobsAreBalancedAndSeeded) {
  const Dataset a = synth_blobs(5, 30, 4, 3, 2.0), b = synth_blobs(5, 30, 4, 3, 2.0), c = synth_blobs(6, 30, 4, 3, 2.0);
  EXPECT_EQ(a.size(), 120u);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.inputs, c.inputs);
  std::vector<int> count(4, 0);
  for (int y : a.labels) ++count[static_cast<std::size_t>(y)];
  EXPECT_EQ(count, (std::vector<int>{30, 30, 30, 30}));
  EXPECT_THROW(synth_blobs(1, 10, 7, 3, 1.0), ContractError);
}
