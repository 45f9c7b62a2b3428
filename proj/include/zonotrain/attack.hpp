#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "zonotrain/architectures.hpp"
#include "zonotrain/properties.hpp"

namespace zonotrain {

/// Row-wise argmax of [N, K] logits; ties go to the lowest index.
inline std::vector<int> predictions(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("predictions expects [N, K] logits");
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[i * k + j] > logits[i * k + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
  Tensor t(Shape{labels.size(), classes}, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) throw DomainError("label out of range");
    t[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return t;
}

inline Tensor label_values(const std::vector<int>& labels) {
  Tensor t(Shape{labels.size()});
  for (std::size_t i = 0; i < labels.size(); ++i) t[i] = labels[i];
  return t;
}

/// Model rebatched to N with a summed per-example cross-entropy, for
/// gradients with respect to the input.
class AttackGraph {
 public:
  AttackGraph(const Model& m, std::size_t n) : graph_(m.graph.rebatched(n)) {
    x_ = graph_.inputs()[0];
    logits_ = graph_.outputs()[0];
    Builder B(graph_);
    labels_ = graph_.add_input("labels", {n});
    per_example_ = B.op(OpKind::SparseSoftmaxCrossEntropy, {logits_, labels_});
    loss_ = B.sum(per_example_, {});
  }

  struct Eval {
    Tensor logits;
    Tensor losses;
    Tensor grad;
  };

  Eval run(const Tensor& x, const Tensor& labels, const Weights& w) const {
    Feeds feeds{{x_, x}, {labels_, labels}};
    const Tape tape = forward(graph_, {loss_, per_example_, logits_}, feeds, w);
    auto grads = backward(tape, loss_, {x_});
    return {tape.value(logits_), tape.value(per_example_), std::move(grads.at(x_))};
  }

 private:
  Graph graph_;
  TensorId x_, logits_, labels_, per_example_, loss_;
};

struct AttackOptions {
  int steps = 20;
  /// Signed-gradient step as a fraction of each coordinate's half-width
  /// (and of the unit coefficient range for generators).
  double step_fraction = 0.125;
};

struct AttackResult {
  Tensor x_adv;                  // [N, ...]
  std::optional<Tensor> coefficients;  // [N, e] when the region has generators
  std::vector<int> clean_pred;
  std::vector<int> adv_pred;
  Tensor adv_loss;               // [N]
};

/// Projected signed-gradient ascent over the region x + δ + Σ v_k G_k with
/// |δ| ≤ radius and v ∈ [−1, 1]^e. Every iterate, including the clean point,
/// is a candidate; per example the misclassifying candidate with the highest
/// loss wins, falling back to the highest-loss candidate. `range` clips the
/// iterates only for generator-free regions, where clipping stays inside the
/// region.
inline AttackResult region_attack(const AttackGraph& ag, const Weights& w, const Tensor& x, const std::vector<int>& labels,
                                  const PerturbationSet& region, std::optional<std::pair<double, double>> range,
                                  const AttackOptions& opt = {}) {
  const std::size_t n = x.shape().at(0);
  const std::size_t per = x.size() / std::max<std::size_t>(n, 1);
  if (labels.size() != n) throw DimensionError("region_attack: label count differs from batch");
  if (region.radius.size() != per) throw DimensionError("region_attack: radius does not match example shape");
  const std::size_t e = region.generators ? region.generators->shape()[0] : 0;
  const Tensor ylab = label_values(labels);

  Tensor delta(x.shape(), 0.0);
  Tensor v(Shape{n, e}, 0.0);
  const bool clip = range && e == 0;

  auto point = [&] {
    Tensor xa = x;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < per; ++j) {
        double s = delta[i * per + j];
        for (std::size_t k = 0; k < e; ++k) s += v[i * e + k] * (*region.generators)[k * per + j];
        xa[i * per + j] += s;
      }
    }
    return xa;
  };

  AttackResult r;
  std::vector<char> best_wrong(n, 0);
  std::vector<double> best_loss(n, -INFINITY);
  r.x_adv = x;
  r.adv_loss = Tensor(Shape{n}, 0.0);
  r.adv_pred.assign(n, 0);
  if (e) r.coefficients = v;

  for (int it = 0; it <= opt.steps; ++it) {
    const Tensor xa = point();
    const auto ev = ag.run(xa, ylab, w);
    const auto pred = predictions(ev.logits);
    if (it == 0) r.clean_pred = pred;
    for (std::size_t i = 0; i < n; ++i) {
      const char wrong = pred[i] != labels[i];
      const double loss = ev.losses[i];
      if (std::pair(wrong, loss) > std::pair(best_wrong[i], best_loss[i])) {
        best_wrong[i] = wrong;
        best_loss[i] = loss;
        std::copy_n(xa.data().begin() + static_cast<std::ptrdiff_t>(i * per), per,
                    r.x_adv.data().begin() + static_cast<std::ptrdiff_t>(i * per));
        if (e) std::copy_n(v.data().begin() + static_cast<std::ptrdiff_t>(i * e), e,
                           r.coefficients->data().begin() + static_cast<std::ptrdiff_t>(i * e));
        r.adv_pred[i] = pred[i];
        r.adv_loss[i] = loss;
      }
    }
    if (it == opt.steps) break;

    auto sign = [](double g) { return static_cast<double>((g > 0) - (g < 0)); };
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < per; ++j) {
        const double rad = region.radius[j];
        double& d = delta[i * per + j];
        d = std::clamp(d + opt.step_fraction * rad * sign(ev.grad[i * per + j]), -rad, rad);
        if (clip) d = std::clamp(x[i * per + j] + d, range->first, range->second) - x[i * per + j];
      }
      for (std::size_t k = 0; k < e; ++k) {
        double dot = 0;
        for (std::size_t j = 0; j < per; ++j) dot += ev.grad[i * per + j] * (*region.generators)[k * per + j];
        double& c = v[i * e + k];
        c = std::clamp(c + opt.step_fraction * sign(dot), -1.0, 1.0);
      }
    }
  }
  return r;
}

/// L∞-ball PGD: x ← clip(x + step·sign(∇L)) inside the ε-ball and the data
/// range. Returns the per-example best iterate (clean point included).
inline Tensor pgd_attack(const Model& m, const Weights& w, const Tensor& x, const std::vector<int>& labels, double eps,
                         int steps, double step_size, std::optional<std::pair<double, double>> range = std::nullopt) {
  if (!(eps >= 0)) throw ContractError("pgd_attack: eps must be >= 0");
  if (eps == 0 || steps == 0) return x;
  const Shape ex(x.shape().begin() + 1, x.shape().end());
  const AttackGraph ag(m, x.shape()[0]);
  return region_attack(ag, w, x, labels, {Tensor(ex, eps), std::nullopt}, range, {steps, step_size / eps}).x_adv;
}

}  // namespace zonotrain
