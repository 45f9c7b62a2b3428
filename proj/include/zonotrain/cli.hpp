#pragma once

// Command-line front end: run configuration schema plus the train, retrain,
// attack, verify and report commands. tools/zonotrain_cli.cpp only forwards
// argv to run_cli.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zonotrain/zonotrain.hpp"

namespace zonotrain::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

enum class Command { Train, Retrain, Attack, Verify, Report };

inline std::optional<Command> command_from_name(std::string_view s) {
  if (s == "train") return Command::Train;
  if (s == "retrain") return Command::Retrain;
  if (s == "attack") return Command::Attack;
  if (s == "verify") return Command::Verify;
  if (s == "report") return Command::Report;
  return std::nullopt;
}

inline std::string_view name_of(Command c) {
  switch (c) {
    case Command::Train: return "train";
    case Command::Retrain: return "retrain";
    case Command::Attack: return "attack";
    case Command::Verify: return "verify";
    case Command::Report: return "report";
  }
  return "";
}

struct DatasetSpec {
  std::string kind = "mnist";
  std::string train_images, train_labels, test_images, test_labels;
  std::size_t train_limit = 0;  // 0 keeps every example
  std::size_t test_limit = 0;
  std::size_t per_class = 50;
  std::size_t test_per_class = 20;
  std::size_t classes = 3;
  std::size_t dim = 4;
  double separation = 4.0;
  std::uint64_t seed = 1;
};

struct ReportRun {
  std::string label;
  std::string checkpoint;
};

struct RunConfig {
  Command command = Command::Train;
  DatasetSpec dataset;
  std::string architecture;
  std::string checkpoint;  // prefix, without .manifest.json
  TrainConfig train;
  std::string out = "out";
  std::size_t attack_examples = 10;
  int attack_steps = 20;
  double attack_step_fraction = 0.125;
  std::size_t verify_examples = 0;  // 0 checks the whole test split
  std::vector<ReportRun> runs;
};

// ---------------------------------------------------------------------------
// Config parsing

namespace cli_detail {

/// Reads one JSON object, recording a diagnostic per bad or unknown field
/// instead of stopping at the first.
class Fields {
 public:
  Fields(const json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(&errors) {
    if (!obj_.is_object()) fail("", "expected an object");
  }

  template <class T>
  void read(const std::string& key, T& into) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    try {
      into = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(key, "has the wrong type");
    }
  }

  template <class T>
  void require(const std::string& key, T& into) {
    if (!has(key)) {
      seen_.insert(key);
      fail(key, "is required");
      return;
    }
    read(key, into);
  }

  bool has(const std::string& key) const { return obj_.is_object() && obj_.contains(key); }
  const json& at(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  void fail(const std::string& key, const std::string& msg) const {
    errors_->push_back((key.empty() ? path_ : path_.empty() ? key : path_ + "." + key) + ": " + msg);
  }

  /// Flags every key that no read/require call asked for.
  void finish() const {
    if (!obj_.is_object()) return;
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) fail(k, "unknown field");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::vector<std::string>* errors_;
  std::set<std::string> seen_;
};

inline std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path q(p);
  return q.is_absolute() ? p : (base / q).lexically_normal().string();
}

}  // namespace cli_detail

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

/// Validates `doc` against schema version 1. Relative paths are taken
/// relative to `base`. All problems are reported together in one ConfigError.
inline RunConfig parse_config(const json& doc, Command cmd, const fs::path& base, const Overrides& ov = {}) {
  using cli_detail::Fields;
  std::vector<std::string> errors;
  RunConfig c;
  c.command = cmd;
  Fields top(doc, "", errors);

  int version = 0;
  top.require("schema_version", version);
  if (top.has("schema_version") && version != kSchemaVersion) {
    top.fail("schema_version", "must be " + std::to_string(kSchemaVersion));
  }
  std::string cmd_name;
  top.read("command", cmd_name);
  if (!cmd_name.empty() && cmd_name != name_of(cmd)) {
    top.fail("command", "says '" + cmd_name + "' but '" + std::string(name_of(cmd)) + "' was requested");
  }

  if (!top.has("dataset")) {
    top.fail("dataset", "is required");
  } else {
    Fields d(top.at("dataset"), "dataset", errors);
    auto& s = c.dataset;
    d.require("kind", s.kind);
    d.read("seed", s.seed);
    if (s.kind == "mnist") {
      d.require("train_images", s.train_images);
      d.require("train_labels", s.train_labels);
      d.require("test_images", s.test_images);
      d.require("test_labels", s.test_labels);
      d.read("train_limit", s.train_limit);
      d.read("test_limit", s.test_limit);
      for (auto* p : {&s.train_images, &s.train_labels, &s.test_images, &s.test_labels}) *p = cli_detail::resolve(base, *p);
    } else if (s.kind == "blobs") {
      d.read("per_class", s.per_class);
      d.read("test_per_class", s.test_per_class);
      d.read("classes", s.classes);
      d.read("dim", s.dim);
      d.read("separation", s.separation);
      if (s.classes < 2 || s.classes > 2 * s.dim) d.fail("classes", "must be in [2, 2*dim]");
      if (!(s.separation > 0)) d.fail("separation", "must be positive");
    } else {
      d.fail("kind", "must be 'mnist' or 'blobs'");
    }
    d.finish();
  }

  if (top.has("model")) {
    Fields m(top.at("model"), "model", errors);
    m.read("architecture", c.architecture);
    m.read("checkpoint", c.checkpoint);
    c.checkpoint = cli_detail::resolve(base, c.checkpoint);
    m.finish();
  }
  if (cmd == Command::Train) {
    if (c.architecture.empty()) top.fail("model.architecture", "is required for train");
    else if (std::find(architecture_names().begin(), architecture_names().end(), c.architecture) == architecture_names().end()) {
      top.fail("model.architecture", "unknown architecture '" + c.architecture + "'");
    }
  }
  if ((cmd == Command::Retrain || cmd == Command::Attack || cmd == Command::Verify) && c.checkpoint.empty()) {
    top.fail("model.checkpoint", "is required for " + std::string(name_of(cmd)));
  }

  auto& t = c.train;
  if (top.has("training")) {
    Fields f(top.at("training"), "training", errors);
    f.read("lambda", t.lambda);
    f.read("xi", t.xi);
    f.read("learning_rate", t.learning_rate);
    f.read("epochs", t.epochs);
    f.read("batch_size", t.batch_size);
    f.read("pgd_steps", t.pgd_steps);
    f.read("pgd_step_fraction", t.pgd_step_fraction);
    f.read("eval_batch", t.eval_batch);
    f.finish();
  }
  c.attack_steps = t.pgd_steps;
  c.attack_step_fraction = t.pgd_step_fraction;

  bool have_epsilon = false;
  if (top.has("property")) {
    Fields p(top.at("property"), "property", errors);
    p.read("kind", t.property);
    have_epsilon = p.has("epsilon");
    p.read("epsilon", t.epsilon);
    p.read("n", t.fourier_n);
    p.read("m", t.fourier_m);
    p.finish();
  }
  if (!property_registry().count(t.property)) top.fail("property.kind", "unknown property '" + t.property + "'");
  const bool needs_region = t.lambda > 0 || cmd != Command::Train;
  if (needs_region && !have_epsilon) {
    top.fail("property.epsilon", t.lambda > 0 ? "is required when training.lambda > 0"
                                              : "is required for " + std::string(name_of(cmd)));
  }

  std::string domain = "Box";
  top.read("domain", domain);
  if (auto d = domain_from_name(domain)) {
    t.domain = *d;
  } else {
    top.fail("domain", "must be 'Box' or 'HybridZonotope'");
  }
  top.read("seed", t.seed);
  top.read("out", c.out);

  if (top.has("attack")) {
    Fields a(top.at("attack"), "attack", errors);
    a.read("examples", c.attack_examples);
    a.read("steps", c.attack_steps);
    a.read("step_fraction", c.attack_step_fraction);
    a.finish();
    if (c.attack_steps < 0 || !(c.attack_step_fraction > 0)) top.fail("attack", "steps must be >= 0 and step_fraction > 0");
  }
  if (top.has("verify")) {
    Fields v(top.at("verify"), "verify", errors);
    v.read("examples", c.verify_examples);
    v.finish();
  }
  if (top.has("report")) {
    Fields r(top.at("report"), "report", errors);
    if (r.has("runs")) {
      const json& runs = r.at("runs");
      if (!runs.is_array()) r.fail("runs", "expected an array");
      for (std::size_t i = 0; runs.is_array() && i < runs.size(); ++i) {
        Fields e(runs[i], "report.runs[" + std::to_string(i) + "]", errors);
        ReportRun run;
        e.require("label", run.label);
        e.require("checkpoint", run.checkpoint);
        run.checkpoint = cli_detail::resolve(base, run.checkpoint);
        e.finish();
        c.runs.push_back(run);
      }
    }
    r.finish();
  }
  if (cmd == Command::Report && c.runs.empty()) {
    if (c.checkpoint.empty()) top.fail("report.runs", "or model.checkpoint is required for report");
    else c.runs.push_back({"Model", c.checkpoint});
  }
  top.finish();

  if (ov.seed) t.seed = *ov.seed;
  if (ov.out) c.out = *ov.out;
  c.out = cli_detail::resolve(base, c.out);
  if (ov.out && fs::path(*ov.out).is_relative()) c.out = fs::path(*ov.out).lexically_normal().string();

  try {
    t.check();
  } catch (const ConfigError& e) {
    errors.push_back(std::string("training: ") + e.what());
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

inline RunConfig load_config(const std::string& path, Command cmd, const Overrides& ov = {}) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(doc, cmd, fs::path(path).parent_path(), ov);
}

// ---------------------------------------------------------------------------
// Shared plumbing

struct Splits {
  Dataset train;
  Dataset test;
};

inline Splits load_data(const DatasetSpec& s) {
  Splits d;
  if (s.kind == "blobs") {
    d.train = synth_blobs(s.seed, s.per_class, s.classes, s.dim, s.separation);
    d.test = synth_blobs(s.seed + 1000003, s.test_per_class, s.classes, s.dim, s.separation);
    return d;
  }
  d.train = load_mnist_idx(s.train_images, s.train_labels);
  d.test = load_mnist_idx(s.test_images, s.test_labels);
  if (s.train_limit) d.train = d.train.head(s.train_limit);
  if (s.test_limit) d.test = d.test.head(s.test_limit);
  return d;
}

inline std::string run_label(const TrainConfig& t) {
  if (!t.robust()) return "Baseline";
  return "Robust (" + std::string(zonotrain::name_of(t.domain)) + ")";
}

inline json metrics_json(const Metrics& m) {
  return {{"test_error", m.test_error},
          {"pgd_error", m.pgd_error},
          {"verify_error", m.verify_error},
          {"verify_vertex_error", m.verify_vertex_error},
          {"examples", m.examples}};
}

inline json config_json(const RunConfig& c) {
  const auto& t = c.train;
  json j = {{"command", name_of(c.command)},
            {"dataset", c.dataset.kind},
            {"property", {{"kind", t.property}, {"epsilon", t.epsilon}, {"n", t.fourier_n}, {"m", t.fourier_m}}},
            {"domain", zonotrain::name_of(t.domain)},
            {"seed", t.seed},
            {"training",
             {{"lambda", t.lambda},
              {"xi", t.xi},
              {"learning_rate", t.learning_rate},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"pgd_steps", t.pgd_steps},
              {"pgd_step_fraction", t.pgd_step_fraction}}}};
  if (!c.architecture.empty()) j["architecture"] = c.architecture;
  if (!c.checkpoint.empty()) j["checkpoint"] = fs::path(c.checkpoint).filename().string();
  return j;
}

inline void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p);
  if (!f) throw FormatError("cannot write " + p.string());
  f << j.dump(2) << '\n';
}

inline Model load_model(const std::string& prefix, const Dataset& data, Weights& w) {
  Checkpoint ck = load_checkpoint(prefix);
  Model m = Model::from_graph(std::move(ck.graph));
  w = std::move(ck.weights);
  const Shape& in = m.graph.shape(m.input);
  if (Shape(in.begin() + 1, in.end()) != data.example_shape()) {
    throw ConfigError("checkpoint input shape " + to_string(in) + " does not fit dataset examples " +
                      to_string(data.example_shape()));
  }
  if (m.classes() < data.classes) {
    throw ConfigError("checkpoint has " + std::to_string(m.classes()) + " classes, dataset has " + std::to_string(data.classes));
  }
  return m;
}

/// Trains while streaming one CSV row and one log line per epoch.
inline TrainResult train_logged(const Model& m, Weights& w, const Splits& d, const TrainConfig& t, const fs::path& csv,
                                std::ostream& log) {
  std::ofstream f(csv);
  if (!f) throw FormatError("cannot write " + csv.string());
  f << "epoch,lambda,loss,standard,adversarial,regularization,test_error\n" << std::setprecision(10);
  return train(m, w, d.train, t, &d.test, [&](const EpochRecord& r) {
    f << r.epoch << ',' << t.lambda_at(r.epoch - 1) << ',' << r.loss << ',' << r.standard << ',' << r.adversarial << ','
      << r.regularization << ',' << r.test_error.value_or(NAN) << '\n';
    f.flush();
    log << "epoch " << r.epoch << '/' << t.epochs << "  loss " << r.loss << "  test_error " << r.test_error.value_or(NAN)
        << "%\n";
  });
}

inline void print_table(std::ostream& log, const std::vector<std::pair<std::string, Metrics>>& rows) {
  std::size_t width = 6;
  for (const auto& [label, m] : rows) width = std::max(width, label.size());
  log << std::left << std::setw(static_cast<int>(width)) << "Model" << std::right << std::setw(12) << "Test"
      << std::setw(12) << "PGD" << std::setw(12) << "Verify" << '\n';
  log << std::fixed << std::setprecision(2);
  for (const auto& [label, m] : rows) {
    log << std::left << std::setw(static_cast<int>(width)) << label << std::right << std::setw(11) << m.test_error << '%'
        << std::setw(11) << m.pgd_error << '%' << std::setw(11) << m.verify_error << "%\n";
  }
  log << std::defaultfloat;
}

/// Binary greyscale PGM of one [H, W, 1] image, values clamped to [0, 1].
inline void write_pgm(const fs::path& p, const Tensor& img, std::size_t h, std::size_t w) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw FormatError("cannot write " + p.string());
  f << "P5\n" << w << ' ' << h << "\n255\n";
  for (std::size_t i = 0; i < h * w; ++i) {
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255.0))));
  }
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_train(const RunConfig& c, std::ostream& log) {
  const Splits d = load_data(c.dataset);
  const Model m = build_architecture(c.architecture, d.train.example_shape(), d.train.classes);
  Weights w = init_weights(m.graph, c.train.seed);
  const fs::path out(c.out);
  fs::create_directories(out);
  log << "training " << c.architecture << " (" << parameter_count(m.graph) << " parameters) as " << run_label(c.train)
      << " on " << d.train.size() << " examples\n";
  const auto r = train_logged(m, w, d, c.train, out / "epochs.csv", log);
  save_checkpoint(m.graph, w, (out / "checkpoint").string());
  const Metrics met = evaluate(m, w, d.test, c.train);
  print_table(log, {{run_label(c.train), met}});
  write_json(out / "report.json", {{"schema_version", kSchemaVersion},
                                   {"command", "train"},
                                   {"label", run_label(c.train)},
                                   {"config", config_json(c)},
                                   {"parameters", parameter_count(m.graph)},
                                   {"epochs", r.epochs.size()},
                                   {"metrics", metrics_json(met)}});
  return 0;
}

inline int cmd_retrain(const RunConfig& c, std::ostream& log) {
  const Splits d = load_data(c.dataset);
  Weights w;
  const Model m = load_model(c.checkpoint, d.train, w);
  // Evaluating first also builds the abstract graph, so a checkpoint with an
  // op the domain cannot transform fails before any training happens.
  const Metrics before = evaluate(m, w, d.test, c.train);
  const fs::path out(c.out);
  fs::create_directories(out);
  const std::string label = c.train.robust() ? "Re-trained (" + std::string(zonotrain::name_of(c.train.domain)) + ")"
                                             : "Continued (Baseline)";
  log << "retraining " << fs::path(c.checkpoint).filename().string() << " as " << label << '\n';
  const auto r = train_logged(m, w, d, c.train, out / "epochs.csv", log);
  save_checkpoint(m.graph, w, (out / "checkpoint").string());
  const Metrics after = evaluate(m, w, d.test, c.train);
  print_table(log, {{"Original", before}, {label, after}});
  json rows = json::array();
  rows.push_back({{"model", "Original"}, {"metrics", metrics_json(before)}});
  rows.push_back({{"model", label}, {"metrics", metrics_json(after)}});
  write_json(out / "report.json", {{"schema_version", kSchemaVersion},
                                   {"command", "retrain"},
                                   {"label", label},
                                   {"config", config_json(c)},
                                   {"epochs", r.epochs.size()},
                                   {"table", rows}});
  return 0;
}

namespace cli_detail {

/// Largest amount by which x_adv − x leaves the region described by radius r
/// and generators G with coefficients v: max_j max(0, |δ_j − Σ v_k G_kj| − r_j).
inline double region_residual(const Tensor& x_adv, const Tensor& x, std::size_t i, std::size_t per,
                              const PerturbationSet& region, const std::optional<Tensor>& coef) {
  const std::size_t e = region.generators ? region.generators->shape()[0] : 0;
  double worst = 0;
  for (std::size_t j = 0; j < per; ++j) {
    double s = x_adv[i * per + j] - x[i * per + j];
    for (std::size_t k = 0; k < e; ++k) s -= (*coef)[i * e + k] * (*region.generators)[k * per + j];
    worst = std::max(worst, std::abs(s) - region.radius[j]);
  }
  return worst;
}

}  // namespace cli_detail

inline int cmd_attack(const RunConfig& c, std::ostream& log) {
  const Splits d = load_data(c.dataset);
  Weights w;
  const Model m = load_model(c.checkpoint, d.test, w);
  const Dataset data = d.test.head(c.attack_examples);
  const std::size_t n = data.size(), per = element_count(data.example_shape());
  if (n == 0) throw ConfigError("attack: no examples selected");
  const auto prop = c.train.make_property();
  const PerturbationSet region = detail::checked_generate(*prop, data.example_shape());
  const AttackGraph ag(m, n);
  const AttackResult atk =
      region_attack(ag, w, data.inputs, data.labels, region, data.range, {c.attack_steps, c.attack_step_fraction});

  const fs::path out(c.out);
  fs::create_directories(out);
  const Shape ex = data.example_shape();
  const bool image = ex.size() == 3 && ex[2] == 1;
  json examples = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    Tensor adv(ex), pert(ex);
    for (std::size_t j = 0; j < per; ++j) {
      adv[j] = atk.x_adv[i * per + j];
      pert[j] = adv[j] - data.inputs[i * per + j];
    }
    json e = {{"index", i},
              {"label", data.labels[i]},
              {"clean_prediction", atk.clean_pred[i]},
              {"adversarial_prediction", atk.adv_pred[i]},
              {"adversarial_loss", atk.adv_loss[i]},
              {"residual", cli_detail::region_residual(atk.x_adv, data.inputs, i, per, region, atk.coefficients)},
              {"perturbation", pert.data()},
              {"adversarial_input", adv.data()}};
    if (atk.coefficients) {
      const std::size_t k = atk.coefficients->shape()[1];
      e["coefficients"] = std::vector<double>(atk.coefficients->data().begin() + static_cast<std::ptrdiff_t>(i * k),
                                              atk.coefficients->data().begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
    }
    if (image) {
      const std::string name = "adv_" + std::to_string(i) + ".pgm";
      write_pgm(out / name, adv, ex[0], ex[1]);
      e["image"] = name;
    }
    examples.push_back(std::move(e));
  }
  json report = {{"schema_version", kSchemaVersion},
                 {"command", "attack"},
                 {"config", config_json(c)},
                 {"generators", region.generators ? region.generators->shape()[0] : 0},
                 {"examples", examples}};
  write_json(out / "report.json", report);

  // Replay: re-read the dumped adversarial inputs and re-classify them. Only
  // flips that survive the round trip are reported as flips.
  std::ifstream back(out / "report.json");
  json dumped = json::parse(back);
  Tensor replay_x(data.inputs.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = dumped["examples"][i]["adversarial_input"].get<std::vector<double>>();
    if (v.size() != per) throw FormatError("attack replay: dumped input " + std::to_string(i) + " has the wrong size");
    std::copy(v.begin(), v.end(), replay_x.data().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  const auto replay_pred = predictions(ag.run(replay_x, label_values(data.labels), w).logits);
  std::size_t flips = 0, confirmed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool agree = replay_pred[i] == atk.adv_pred[i];
    const bool flip = agree && atk.clean_pred[i] == data.labels[i] && replay_pred[i] != data.labels[i];
    confirmed += agree;
    flips += flip;
    report["examples"][i]["replay_prediction"] = replay_pred[i];
    report["examples"][i]["flipped"] = flip;
  }
  report["flips"] = flips;
  report["replay_confirmed"] = confirmed;
  write_json(out / "report.json", report);
  log << "attacked " << n << " examples with " << prop->kind() << " (eps " << c.train.epsilon << "): " << flips
      << " label flips, " << confirmed << '/' << n << " replays confirmed\n";
  return 0;
}

inline int cmd_verify(const RunConfig& c, std::ostream& log) {
  const Splits d = load_data(c.dataset);
  Weights w;
  const Model m = load_model(c.checkpoint, d.test, w);
  const Dataset data = c.verify_examples ? d.test.head(c.verify_examples) : d.test;
  const Metrics met = evaluate(m, w, data, c.train);
  json per = json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    per.push_back({{"index", i}, {"label", data.labels[i]}, {"status", met.verified[i] ? "verified" : "undecided"}});
  }
  const fs::path out(c.out);
  fs::create_directories(out);
  write_json(out / "report.json", {{"schema_version", kSchemaVersion},
                                   {"command", "verify"},
                                   {"config", config_json(c)},
                                   {"metrics", metrics_json(met)},
                                   {"examples", per}});
  print_table(log, {{fs::path(c.checkpoint).filename().string(), met}});
  return 0;
}

inline int cmd_report(const RunConfig& c, std::ostream& log) {
  const Splits d = load_data(c.dataset);
  std::vector<std::pair<std::string, Metrics>> rows;
  json table = json::array();
  for (const auto& run : c.runs) {
    Weights w;
    const Model m = load_model(run.checkpoint, d.test, w);
    rows.emplace_back(run.label, evaluate(m, w, d.test, c.train));
    table.push_back({{"model", run.label}, {"metrics", metrics_json(rows.back().second)}});
  }
  const fs::path out(c.out);
  fs::create_directories(out);
  write_json(out / "report.json",
             {{"schema_version", kSchemaVersion}, {"command", "report"}, {"config", config_json(c)}, {"table", table}});
  print_table(log, rows);
  return 0;
}

inline int run_command(const RunConfig& c, std::ostream& log) {
  switch (c.command) {
    case Command::Train: return cmd_train(c, log);
    case Command::Retrain: return cmd_retrain(c, log);
    case Command::Attack: return cmd_attack(c, log);
    case Command::Verify: return cmd_verify(c, log);
    case Command::Report: return cmd_report(c, log);
  }
  return 1;
}

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3, kUnsupported = 4 };

/// Parses argv, runs one command and maps failures to exit codes.
inline int run_cli(int argc, char** argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Robust training and verification of small image classifiers"};
  app.name("zonotrain");
  std::string command, config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  app.add_option("command", command, "train | retrain | attack | verify | report")->required();
  app.add_option("--config", config, "JSON run configuration")->required();
  app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--out", out, "override the output directory");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, log, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, log, err);
    return kConfig;
  }

  try {
    const auto cmd = command_from_name(command);
    if (!cmd) throw ConfigError("unknown command '" + command + "'");
    const RunConfig c = load_config(config, *cmd, {seed, out});
    return run_command(c, log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const UnsupportedOpError& e) {
    err << "unsupported op " << e.op() << ": " << e.what() << '\n';
    return kUnsupported;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace zonotrain::cli
