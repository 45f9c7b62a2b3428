#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "zonotrain/autodiff.hpp"

namespace zonotrain {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  Graph graph;
  Weights weights;
};

namespace ckpt_detail {

using nlohmann::json;

inline std::string_view role_name(TensorRole r) {
  switch (r) {
    case TensorRole::Input: return "input";
    case TensorRole::Constant: return "constant";
    case TensorRole::Variable: return "variable";
    case TensorRole::OpOutput: return "op";
  }
  return "";
}

inline TensorRole role_from(const std::string& s) {
  if (s == "input") return TensorRole::Input;
  if (s == "constant") return TensorRole::Constant;
  if (s == "variable") return TensorRole::Variable;
  if (s == "op") return TensorRole::OpOutput;
  throw FormatError("unknown tensor role '" + s + "'");
}

inline json attrs_to_json(OpKind k, const Attrs& a) {
  json j = json::object();
  for (auto f : attr_fields(k)) {
    switch (f) {
      case AttrField::Stride: j["stride"] = a.stride; break;
      case AttrField::Padding: j["padding"] = a.padding; break;
      case AttrField::Axis: j["axis"] = a.axis; break;
      case AttrField::Axes: j["axes"] = a.axes; break;
      case AttrField::Keepdims: j["keepdims"] = a.keepdims; break;
      case AttrField::Shape: j["shape"] = a.shape; break;
      case AttrField::Perm: j["perm"] = a.perm; break;
      case AttrField::Begin: j["begin"] = a.begin; break;
      case AttrField::End: j["end"] = a.end; break;
      case AttrField::Strides: j["strides"] = a.strides; break;
    }
  }
  return j;
}

inline Attrs attrs_from_json(OpKind k, const json& j) {
  Attrs a;
  for (auto f : attr_fields(k)) {
    switch (f) {
      case AttrField::Stride: a.stride = j.at("stride").get<std::int64_t>(); break;
      case AttrField::Padding: a.padding = j.at("padding").get<std::int64_t>(); break;
      case AttrField::Axis: a.axis = j.at("axis").get<std::int64_t>(); break;
      case AttrField::Axes: a.axes = j.at("axes").get<std::vector<std::int64_t>>(); break;
      case AttrField::Keepdims: a.keepdims = j.at("keepdims").get<bool>(); break;
      case AttrField::Shape: a.shape = j.at("shape").get<std::vector<std::int64_t>>(); break;
      case AttrField::Perm: a.perm = j.at("perm").get<std::vector<std::int64_t>>(); break;
      case AttrField::Begin: a.begin = j.at("begin").get<std::vector<std::int64_t>>(); break;
      case AttrField::End: a.end = j.at("end").get<std::vector<std::int64_t>>(); break;
      case AttrField::Strides: a.strides = j.at("strides").get<std::vector<std::int64_t>>(); break;
    }
  }
  return a;
}

inline void append_f64(std::string& blob, const Tensor& t) {
  for (double v : t.values()) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

inline Tensor read_f64(const std::string& blob, std::size_t offset, const Shape& shape) {
  const std::size_t n = element_count(shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) {
      bits |= std::uint64_t{static_cast<unsigned char>(blob[offset + 8 * i + static_cast<std::size_t>(k)])} << (8 * k);
    }
    v[i] = std::bit_cast<double>(bits);
  }
  return Tensor(shape, std::move(v));
}

inline std::vector<std::uint32_t> ids(const std::vector<TensorId>& v) {
  std::vector<std::uint32_t> out;
  for (auto t : v) out.push_back(t.value);
  return out;
}

inline std::vector<TensorId> to_ids(const json& j) {
  std::vector<TensorId> out;
  for (auto v : j.get<std::vector<std::uint32_t>>()) out.push_back(TensorId{v});
  return out;
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::string basename(const std::string& path) {
  const auto pos = path.find_last_of('/');
  return pos == std::string::npos ? path : path.substr(pos + 1);
}

}  // namespace ckpt_detail

/// Writes `<prefix>.manifest.json` and `<prefix>.weights.bin`. Variables are
/// stored first in slot order, then constants in tensor order.
inline void save_checkpoint(const Graph& g, const Weights& weights, const std::string& prefix) {
  using ckpt_detail::json;
  g.validate();
  if (weights.size() != g.variables().size()) throw ContractError("save_checkpoint: weight count does not match variables");

  std::string blob;
  json vars = json::array();
  for (std::size_t s = 0; s < g.variables().size(); ++s) {
    const TensorId id = g.variables()[s];
    const auto& ti = g.info(id);
    if (weights[s].shape() != ti.shape) throw DimensionError("save_checkpoint: weight '" + ti.name + "' has wrong shape");
    vars.push_back({{"name", ti.name}, {"tensor", id.value}, {"shape", ti.shape}, {"offset", blob.size()},
                    {"bytes", 8 * weights[s].size()}});
    ckpt_detail::append_f64(blob, weights[s]);
  }
  json consts = json::array();
  json tensors = json::array();
  for (std::size_t i = 0; i < g.tensor_count(); ++i) {
    const auto& ti = g.tensors()[i];
    json t = {{"id", i}, {"name", ti.name}, {"role", ckpt_detail::role_name(ti.role)}, {"shape", ti.shape}};
    if (ti.role == TensorRole::Variable) t["slot"] = ti.slot;
    if (ti.role == TensorRole::Constant) {
      consts.push_back({{"tensor", i}, {"shape", ti.shape}, {"offset", blob.size()}, {"bytes", 8 * ti.value->size()}});
      ckpt_detail::append_f64(blob, *ti.value);
    }
    tensors.push_back(std::move(t));
  }
  json nodes = json::array();
  for (const auto& op : g.nodes()) {
    nodes.push_back({{"op", std::string(name_of(op.kind))},
                     {"inputs", ckpt_detail::ids(op.inputs)},
                     {"outputs", ckpt_detail::ids(op.outputs)},
                     {"attrs", ckpt_detail::attrs_to_json(op.kind, op.attrs)}});
  }
  json manifest = {{"format_version", kCheckpointFormatVersion},
                   {"weights_file", ckpt_detail::basename(prefix) + ".weights.bin"},
                   {"weights_bytes", blob.size()},
                   {"tensors", tensors},
                   {"nodes", nodes},
                   {"inputs", ckpt_detail::ids(g.inputs())},
                   {"outputs", ckpt_detail::ids(g.outputs())},
                   {"variables", vars},
                   {"constants", consts}};

  std::ofstream m(prefix + ".manifest.json", std::ios::binary);
  std::ofstream w(prefix + ".weights.bin", std::ios::binary);
  if (!m || !w) throw FormatError("cannot write checkpoint at " + prefix);
  m << manifest.dump(2) << '\n';
  w.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

inline Checkpoint load_checkpoint(const std::string& prefix) {
  using ckpt_detail::json;
  json manifest;
  try {
    manifest = json::parse(ckpt_detail::read_text(prefix + ".manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError(prefix + ".manifest.json: " + e.what());
  }
  const std::string blob = ckpt_detail::read_text(prefix + ".weights.bin");

  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported");
    }
    const std::size_t declared = manifest.at("weights_bytes").get<std::size_t>();
    if (declared != blob.size()) {
      throw FormatError("weights blob is " + std::to_string(blob.size()) + " bytes, manifest declares " +
                        std::to_string(declared), blob.size());
    }

    std::vector<TensorInfo> tensors;
    for (const auto& t : manifest.at("tensors")) {
      TensorInfo ti;
      ti.name = t.at("name").get<std::string>();
      ti.role = ckpt_detail::role_from(t.at("role").get<std::string>());
      ti.shape = t.at("shape").get<Shape>();
      if (ti.role == TensorRole::Variable) ti.slot = t.at("slot").get<std::size_t>();
      tensors.push_back(std::move(ti));
    }

    std::size_t expect = 0;
    auto check_array = [&](const json& a, const std::string& label) {
      const std::size_t off = a.at("offset").get<std::size_t>();
      const std::size_t bytes = a.at("bytes").get<std::size_t>();
      const Shape shape = a.at("shape").get<Shape>();
      if (off != expect) throw FormatError("array '" + label + "' starts at offset " + std::to_string(off) + ", expected " + std::to_string(expect), off);
      if (bytes != 8 * element_count(shape)) throw FormatError("array '" + label + "' byte count does not match its shape", off);
      if (off + bytes > blob.size()) throw FormatError("array '" + label + "' runs past the end of the weights blob", off);
      expect = off + bytes;
      return std::make_pair(off, shape);
    };

    Weights weights;
    std::vector<TensorId> variables;
    for (const auto& v : manifest.at("variables")) {
      const std::string label = v.at("name").get<std::string>();
      auto [off, shape] = check_array(v, label);
      const auto tid = v.at("tensor").get<std::uint32_t>();
      if (tid >= tensors.size() || tensors[tid].role != TensorRole::Variable || tensors[tid].shape != shape ||
          tensors[tid].slot != weights.size()) {
        throw FormatError("variable '" + label + "' is inconsistent with the tensor table", off);
      }
      weights.push_back(ckpt_detail::read_f64(blob, off, shape));
      variables.push_back(TensorId{tid});
    }
    for (const auto& c : manifest.at("constants")) {
      const auto tid = c.at("tensor").get<std::uint32_t>();
      auto [off, shape] = check_array(c, "constant " + std::to_string(tid));
      if (tid >= tensors.size() || tensors[tid].role != TensorRole::Constant || tensors[tid].shape != shape) {
        throw FormatError("constant " + std::to_string(tid) + " is inconsistent with the tensor table", off);
      }
      tensors[tid].value = ckpt_detail::read_f64(blob, off, shape);
    }
    if (expect != blob.size()) throw FormatError("weights blob has trailing bytes", expect);

    std::vector<OpNode> nodes;
    for (const auto& n : manifest.at("nodes")) {
      const auto name = n.at("op").get<std::string>();
      const auto kind = op_kind_from_name(name);
      if (!kind) throw UnsupportedOpError(name, "checkpoint");
      OpNode op{*kind, ckpt_detail::to_ids(n.at("inputs")), ckpt_detail::to_ids(n.at("outputs")),
                ckpt_detail::attrs_from_json(*kind, n.at("attrs"))};
      for (auto out : op.outputs) {
        if (out.value >= tensors.size()) throw FormatError("node output id out of range");
        tensors[out.value].producer = NodeId{static_cast<std::uint32_t>(nodes.size())};
      }
      nodes.push_back(std::move(op));
    }
    for (const auto& ti : tensors) {
      if (ti.role == TensorRole::Constant && !ti.value) throw FormatError("constant '" + ti.name + "' has no stored value");
    }

    Checkpoint ck;
    ck.graph.restore(std::move(tensors), std::move(nodes), ckpt_detail::to_ids(manifest.at("inputs")),
                     ckpt_detail::to_ids(manifest.at("outputs")), std::move(variables));
    try {
      ck.graph.validate();
    } catch (const UnsupportedOpError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(std::string("checkpoint graph is invalid: ") + e.what());
    }
    ck.weights = std::move(weights);
    return ck;
  } catch (const json::exception& e) {
    throw FormatError(prefix + ".manifest.json: " + e.what());
  }
}

}  // namespace zonotrain
