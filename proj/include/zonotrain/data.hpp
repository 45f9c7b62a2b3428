#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "zonotrain/tensor.hpp"

namespace zonotrain {

struct Dataset {
  Tensor inputs;             // [N, ...]
  std::vector<int> labels;   // N entries in [0, classes)
  std::size_t classes = 0;
  std::optional<std::pair<double, double>> range;  // valid input range, if any

  std::size_t size() const noexcept { return labels.size(); }

  Shape example_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }

  /// Rows [begin, begin + count) as a batch tensor.
  Tensor batch(std::size_t begin, std::size_t count) const { return gather(range_indices(begin, count)); }

  Tensor gather(const std::vector<std::size_t>& idx) const {
    const std::size_t per = element_count(example_shape());
    Shape s = inputs.shape();
    s[0] = idx.size();
    Tensor out(s);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(inputs.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                  out.data().begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return out;
  }

  Tensor label_tensor(const std::vector<std::size_t>& idx) const {
    Tensor out(Shape{idx.size()});
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels.at(idx[i]);
    return out;
  }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset d;
    d.inputs = gather(idx);
    for (auto i : idx) d.labels.push_back(labels.at(i));
    d.classes = classes;
    d.range = range;
    return d;
  }

  Dataset head(std::size_t n) const { return subset(range_indices(0, std::min(n, size()))); }

  static std::vector<std::size_t> range_indices(std::size_t begin, std::size_t count) {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = begin + i;
    return idx;
  }
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& what) {
  if (off + 4 > b.size()) throw FormatError(what + ": header truncated", off);
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace detail

/// Reads an IDX image/label pair (big-endian headers, magic 0x803 / 0x801).
/// Pixels are scaled to [0, 1]; images come out as [N, rows, cols, 1].
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);
  if (detail::be32(img, 0, images_path) != 0x00000803u) throw FormatError(images_path + ": bad image magic", 0);
  if (detail::be32(lab, 0, labels_path) != 0x00000801u) throw FormatError(labels_path + ": bad label magic", 0);
  const std::size_t n = detail::be32(img, 4, images_path);
  const std::size_t rows = detail::be32(img, 8, images_path);
  const std::size_t cols = detail::be32(img, 12, images_path);
  const std::size_t nl = detail::be32(lab, 4, labels_path);
  if (nl != n) throw FormatError("image count " + std::to_string(n) + " != label count " + std::to_string(nl), 4);
  const std::size_t per = rows * cols;
  if (img.size() != 16 + n * per) throw FormatError(images_path + ": expected " + std::to_string(16 + n * per) + " bytes", img.size());
  if (lab.size() != 8 + n) throw FormatError(labels_path + ": expected " + std::to_string(8 + n) + " bytes", lab.size());

  Dataset d;
  d.inputs = Tensor(Shape{n, rows, cols, 1});
  for (std::size_t i = 0; i < n * per; ++i) d.inputs[i] = img[16 + i] / 255.0;
  d.labels.resize(n);
  int top = -1;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = lab[8 + i];
    top = std::max(top, d.labels[i]);
  }
  d.classes = std::max(10, top + 1);
  d.range = std::make_pair(0.0, 1.0);
  return d;
}

/// Gaussian clusters (σ = 1) around fixed centers: class k sits at
/// ±separation along axis k mod dim (sign flips for k ≥ dim). Balanced and
/// shuffled with `seed`.
inline Dataset synth_blobs(std::uint64_t seed, std::size_t per_class, std::size_t classes, std::size_t dim,
                           double separation) {
  if (!(separation > 0)) throw ContractError("synth_blobs: separation must be positive");
  if (classes == 0 || dim == 0 || classes > 2 * dim) throw ContractError("synth_blobs: need 1 <= classes <= 2*dim");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = per_class * classes;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  Dataset d;
  d.inputs = Tensor(Shape{n, dim});
  d.labels.resize(n);
  d.classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = order[i] % classes;
    d.labels[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < dim; ++j) {
      double center = 0;
      if (j == k % dim) center = k < dim ? separation : -separation;
      d.inputs[i * dim + j] = center + noise(rng);
    }
  }
  return d;
}

}  // namespace zonotrain
