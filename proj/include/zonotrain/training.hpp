#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "zonotrain/attack.hpp"
#include "zonotrain/data.hpp"
#include "zonotrain/transform.hpp"

namespace zonotrain {

struct TrainConfig {
  double lambda = 0.0;
  double epsilon = 0.0;
  double xi = 0.01;
  double learning_rate = 1e-3;
  int epochs = 1;
  std::size_t batch_size = 50;
  std::string property = "BallDemoted";
  int fourier_n = 0;
  int fourier_m = 0;
  Domain domain = Domain::Box;
  std::uint64_t seed = 0;
  int pgd_steps = 20;
  double pgd_step_fraction = 0.125;
  std::size_t eval_batch = 100;
  /// Overrides `lambda` per epoch when set.
  std::function<double(int epoch)> lambda_schedule;

  void check() const {
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be finite and >= 0");
    if (!(xi >= 0)) throw ConfigError("xi must be >= 0");
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be > 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size == 0 || eval_batch == 0) throw ConfigError("batch sizes must be positive");
    if (pgd_steps < 0 || !(pgd_step_fraction > 0)) throw ConfigError("invalid PGD settings");
  }

  bool robust() const { return lambda > 0 || static_cast<bool>(lambda_schedule); }
  double lambda_at(int epoch) const { return lambda_schedule ? lambda_schedule(epoch) : lambda; }

  std::unique_ptr<Property> make_property() const {
    return zonotrain::make_property(property, {epsilon, fourier_n, fourier_m});
  }
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0;
  double standard = 0;
  double adversarial = 0;
  double regularization = 0;
  std::optional<double> test_error;
};

struct Metrics {
  double test_error = 0;
  double pgd_error = 0;
  double verify_error = 0;
  double verify_vertex_error = 0;
  std::size_t examples = 0;
  std::vector<char> verified;  // per example: 1 when no class can overtake the label
};

// ---------------------------------------------------------------------------
// Loss assembly

struct LossTerms {
  TensorId total;
  TensorId standard;
  std::optional<TensorId> adversarial;
  TensorId regularization;
};

/// Appends L(N(x), y) + λ·L(adversary, y) + ξ·Σθ² to `g`. `labels` is [N],
/// `onehot` [N, K] and `lambda` a scalar tensor. The adversarial term is only
/// built when `property` is given.
inline LossTerms combined_loss(Graph& g, TensorId x, TensorId logits, TensorId labels, TensorId onehot, TensorId lambda,
                               const Property* property, Domain domain, double xi) {
  Builder B(g);
  LossTerms t;
  t.standard = B.mean(B.op(OpKind::SparseSoftmaxCrossEntropy, {logits, labels}), {});
  t.total = t.standard;
  if (property) {
    const SymElement d0 = attach(B, *property, domain, x);
    const auto out = transform(g, x, d0, logits);
    if (!out) throw StructureError("combined_loss: the logits carry no abstract value");
    const TensorId vertex = sym::adversary(B, *out, onehot);
    t.adversarial = B.mean(B.op(OpKind::SparseSoftmaxCrossEntropy, {vertex, labels}), {});
    t.total = B.add(t.total, B.mul(lambda, *t.adversarial));
  }
  std::optional<TensorId> sq;
  for (auto v : g.variables()) {
    const TensorId s = B.sum(B.mul(v, v), {});
    sq = sq ? B.add(*sq, s) : s;
  }
  t.regularization = sq ? B.mul(*sq, xi) : B.scalar(0.0);
  t.total = B.add(t.total, t.regularization);
  return t;
}

/// Training graph for one batch size.
class LossGraph {
 public:
  LossGraph(const Model& m, std::size_t n, const Property* property, Domain domain, double xi)
      : graph_(m.graph.rebatched(n)), classes_(m.classes()) {
    x_ = graph_.inputs()[0];
    const TensorId logits = graph_.outputs()[0];
    labels_ = graph_.add_input("labels", {n});
    onehot_ = graph_.add_input("onehot", {n, classes_});
    lambda_ = graph_.add_input("lambda", {});
    terms_ = combined_loss(graph_, x_, logits, labels_, onehot_, lambda_, property, domain, xi);
    std::vector<TensorId> targets{terms_.total, terms_.standard, terms_.regularization};
    if (terms_.adversarial) targets.push_back(*terms_.adversarial);
    plan_ = std::make_unique<ExecutionPlan>(graph_, targets);
  }

  struct Step {
    double total, standard, adversarial, regularization;
    Weights grads;
  };

  Step run(const Tensor& x, const std::vector<int>& labels, double lambda, const Weights& w) const {
    const Feeds feeds{{x_, x}, {labels_, label_values(labels)}, {onehot_, one_hot(labels, classes_)},
                      {lambda_, Tensor::scalar(lambda)}};
    const Tape tape = forward(*plan_, feeds, w);
    const auto& vars = graph_.variables();
    auto g = backward(tape, terms_.total, vars);
    Step s{tape.value(terms_.total).item(), tape.value(terms_.standard).item(),
           terms_.adversarial ? tape.value(*terms_.adversarial).item() : 0.0,
           tape.value(terms_.regularization).item(), {}};
    for (auto v : vars) s.grads.push_back(std::move(g.at(v)));
    return s;
  }

  const Graph& graph() const noexcept { return graph_; }

 private:
  Graph graph_;
  std::size_t classes_;
  TensorId x_, labels_, onehot_, lambda_;
  LossTerms terms_;
  std::unique_ptr<ExecutionPlan> plan_;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(Weights& params, const Weights& grads, AdamState& s, double lr) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter and gradient counts differ");
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.shape(), 0.0);
      s.v.emplace_back(p.shape(), 0.0);
    }
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape()) throw DimensionError("adam_step: gradient shape differs from parameter");
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = s.m[i].data();
    auto v = s.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = s.beta1 * m[j] + (1 - s.beta1) * g[j];
      v[j] = s.beta2 * v[j] + (1 - s.beta2) * g[j] * g[j];
      p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + s.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Evaluation

namespace train_detail {

/// Model + property + transform, producing per-class output bounds and the
/// adversarial vertex for a batch of size N.
class VerifyGraph {
 public:
  VerifyGraph(const Model& m, std::size_t n, const Property& p, Domain d) : graph_(m.graph.rebatched(n)) {
    x_ = graph_.inputs()[0];
    Builder B(graph_);
    onehot_ = graph_.add_input("onehot", {n, m.classes()});
    const auto out = transform(graph_, x_, attach(B, p, d, x_), graph_.outputs()[0]);
    if (!out) throw StructureError("verify: the logits carry no abstract value");
    std::tie(lower_, upper_) = sym::lower_upper(B, *out);
    vertex_ = sym::adversary(B, *out, onehot_);
    plan_ = std::make_unique<ExecutionPlan>(graph_, std::vector<TensorId>{lower_, upper_, vertex_});
  }

  struct Out {
    Tensor lower, upper, vertex;
  };

  Out run(const Tensor& x, const Tensor& onehot, const Weights& w) const {
    const Feeds feeds{{x_, x}, {onehot_, onehot}};
    const Tape t = forward(*plan_, feeds, w);
    return {t.value(lower_), t.value(upper_), t.value(vertex_)};
  }

 private:
  Graph graph_;
  TensorId x_, onehot_, lower_, upper_, vertex_;
  std::unique_ptr<ExecutionPlan> plan_;
};

inline double percent(std::size_t k, std::size_t n) { return n ? 100.0 * static_cast<double>(k) / static_cast<double>(n) : 0.0; }

}  // namespace train_detail

/// Example i is verified when L_y > U_k for every k ≠ y.
inline std::vector<char> verified_mask(const Tensor& lower, const Tensor& upper, const std::vector<int>& labels) {
  const std::size_t n = lower.shape()[0], k = lower.shape()[1];
  std::vector<char> ok(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    for (std::size_t j = 0; j < k; ++j) {
      if (j != y && upper[i * k + j] >= lower[i * k + y]) ok[i] = 0;
    }
  }
  return ok;
}

/// Test, PGD and Verify error rates (in percent) of the model on `data`
/// under the configured property and domain.
inline Metrics evaluate(const Model& m, const Weights& w, const Dataset& data, const TrainConfig& cfg) {
  cfg.check();
  if (data.size() == 0) throw ContractError("evaluate: empty dataset");
  const auto property = cfg.make_property();
  const Shape ex = data.example_shape();
  const PerturbationSet region = detail::checked_generate(*property, ex);
  const AttackOptions opt{cfg.pgd_steps, cfg.pgd_step_fraction};

  std::map<std::size_t, std::unique_ptr<AttackGraph>> attack_graphs;
  std::map<std::size_t, std::unique_ptr<train_detail::VerifyGraph>> verify_graphs;
  std::size_t wrong = 0, pgd_wrong = 0, unverified = 0, vertex_wrong = 0;
  Metrics r;
  r.examples = data.size();
  for (std::size_t begin = 0; begin < data.size(); begin += cfg.eval_batch) {
    const std::size_t n = std::min(cfg.eval_batch, data.size() - begin);
    const auto idx = Dataset::range_indices(begin, n);
    const Tensor x = data.gather(idx);
    std::vector<int> y(data.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                       data.labels.begin() + static_cast<std::ptrdiff_t>(begin + n));

    auto& ag = attack_graphs[n];
    if (!ag) ag = std::make_unique<AttackGraph>(m, n);
    const AttackResult atk = region_attack(*ag, w, x, y, region, data.range, opt);

    auto& vg = verify_graphs[n];
    if (!vg) vg = std::make_unique<train_detail::VerifyGraph>(m, n, *property, cfg.domain);
    const auto vo = vg->run(x, one_hot(y, m.classes()), w);
    const auto ok = verified_mask(vo.lower, vo.upper, y);
    const auto vertex_pred = predictions(vo.vertex);

    for (std::size_t i = 0; i < n; ++i) {
      wrong += atk.clean_pred[i] != y[i];
      pgd_wrong += atk.adv_pred[i] != y[i];
      unverified += !ok[i];
      vertex_wrong += vertex_pred[i] != y[i];
      r.verified.push_back(ok[i]);
    }
  }
  r.test_error = train_detail::percent(wrong, data.size());
  r.pgd_error = train_detail::percent(pgd_wrong, data.size());
  r.verify_error = train_detail::percent(unverified, data.size());
  r.verify_vertex_error = train_detail::percent(vertex_wrong, data.size());
  return r;
}

/// Clean misclassification rate only.
inline double test_error(const Model& m, const Weights& w, const Dataset& data, std::size_t batch = 100) {
  std::size_t wrong = 0;
  std::map<std::size_t, Graph> graphs;
  for (std::size_t begin = 0; begin < data.size(); begin += batch) {
    const std::size_t n = std::min(batch, data.size() - begin);
    auto it = graphs.find(n);
    if (it == graphs.end()) it = graphs.emplace(n, m.graph.rebatched(n)).first;
    const Graph& g = it->second;
    const Feeds feeds{{g.inputs()[0], data.batch(begin, n)}};
    const Tape t = forward(g, {g.outputs()[0]}, feeds, w);
    const auto pred = predictions(t.value(g.outputs()[0]));
    for (std::size_t i = 0; i < n; ++i) wrong += pred[i] != data.labels[begin + i];
  }
  return train_detail::percent(wrong, data.size());
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  std::vector<EpochRecord> epochs;
  AdamState optimizer;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch Adam over the combined loss. Batches are drawn from a
/// per-epoch shuffle seeded by `cfg.seed`. A non-finite loss or value aborts
/// with a NumericError naming the epoch, the batch and the loss trace.
inline TrainResult train(const Model& m, Weights& w, const Dataset& data, const TrainConfig& cfg,
                         const Dataset* eval = nullptr, const EpochCallback& on_epoch = {}) {
  cfg.check();
  if (data.size() == 0) throw ContractError("train: empty dataset");
  if (w.size() != m.graph.variables().size()) throw ContractError("train: weight count does not match the model");
  std::unique_ptr<Property> property;
  if (cfg.robust()) property = cfg.make_property();

  std::map<std::size_t, std::unique_ptr<LossGraph>> graphs;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult r;
  std::vector<double> trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lambda = cfg.lambda_at(epoch);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < data.size(); begin += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, data.size() - begin);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(begin + n));
      std::vector<int> y;
      for (auto i : idx) y.push_back(data.labels[i]);

      auto& lg = graphs[n];
      if (!lg) lg = std::make_unique<LossGraph>(m, n, property.get(), cfg.domain, cfg.xi);
      LossGraph::Step s;
      try {
        s = lg->run(data.gather(idx), y, lambda, w);
        if (!std::isfinite(s.total)) throw NumericError("loss is " + std::to_string(s.total));
      } catch (const NumericError& e) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch + 1 << ", batch " << batches + 1 << ": " << e.what()
            << "; recent losses:";
        const std::size_t from = trace.size() > 10 ? trace.size() - 10 : 0;
        for (std::size_t i = from; i < trace.size(); ++i) msg << ' ' << trace[i];
        throw NumericError(msg.str());
      }
      trace.push_back(s.total);
      adam_step(w, s.grads, r.optimizer, cfg.learning_rate);
      rec.loss += s.total;
      rec.standard += s.standard;
      rec.adversarial += s.adversarial;
      rec.regularization += s.regularization;
      ++batches;
    }
    rec.loss /= static_cast<double>(batches);
    rec.standard /= static_cast<double>(batches);
    rec.adversarial /= static_cast<double>(batches);
    rec.regularization /= static_cast<double>(batches);
    if (eval) rec.test_error = test_error(m, w, *eval, cfg.eval_batch);
    if (on_epoch) on_epoch(rec);
    r.epochs.push_back(rec);
  }
  return r;
}

}  // namespace zonotrain
