#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "zonotrain/zonotrain.hpp"

using namespace zonotrain;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("zt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const json& j) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  Outcome cli(const std::string& args) {
    const fs::path o = dir_ / "stdout.txt", e = dir_ / "stderr.txt";
    const std::string cmd = std::string(ZT_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
  }

  static json blobs() {
    return {{"kind", "blobs"}, {"per_class", 40}, {"test_per_class", 20}, {"classes", 3},
            {"dim", 4},        {"separation", 3.0}, {"seed", 3}};
  }

  json train_config(double lambda, std::string domain = "Box") {
    return {{"schema_version", 1},
            {"dataset", blobs()},
            {"model", {{"architecture", "FFNN-tiny"}}},
            {"training", {{"lambda", lambda}, {"epochs", 3}, {"batch_size", 20}, {"learning_rate", 0.01}, {"pgd_steps", 10}}},
            {"property", {{"kind", "BallDemoted"}, {"epsilon", 0.3}}},
            {"domain", domain},
            {"seed", 5},
            {"out", "run"}};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, TrainWritesOrderedMetricsAndArtifacts) {
  const auto cfg = write_config("train.json", train_config(1.0));
  const Outcome r = cli("train --config " + cfg.string());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"report.json", "epochs.csv", "checkpoint.manifest.json", "checkpoint.weights.bin"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }
  const json rep = json::parse(slurp(dir_ / "run" / "report.json"));
  EXPECT_EQ(rep["label"], "Robust (Box)");
  const auto& m = rep["metrics"];
  EXPECT_LE(m["test_error"].get<double>(), m["pgd_error"].get<double>());
  EXPECT_LE(m["pgd_error"].get<double>(), m["verify_error"].get<double>());
  EXPECT_EQ(m["examples"], 60);

  std::istringstream csv(slurp(dir_ / "run" / "epochs.csv"));
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  EXPECT_EQ(line, "epoch,lambda,loss,standard,adversarial,regularization,test_error");
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 3u);
}

TEST_F(CliTest, ReportsAreReproducibleFromConfigAndSeed) {
  const auto cfg = write_config("train.json", train_config(1.0));
  ASSERT_EQ(cli("train --config " + cfg.string() + " --out " + (dir_ / "a").string()).code, 0);
  ASSERT_EQ(cli("train --config " + cfg.string() + " --out " + (dir_ / "b").string()).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "report.json"), slurp(dir_ / "b" / "report.json"));
  EXPECT_EQ(slurp(dir_ / "a" / "checkpoint.weights.bin"), slurp(dir_ / "b" / "checkpoint.weights.bin"));
  ASSERT_EQ(cli("train --config " + cfg.string() + " --seed 6 --out " + (dir_ / "c").string()).code, 0);
  EXPECT_NE(slurp(dir_ / "a" / "checkpoint.weights.bin"), slurp(dir_ / "c" / "checkpoint.weights.bin"));
}

TEST_F(CliTest, ZeroLambdaIsLabelledBaseline) {
  const auto cfg = write_config("train.json", train_config(0.0));
  const Outcome r = cli("train --config " + cfg.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(slurp(dir_ / "run" / "report.json"))["label"], "Baseline");
}

TEST_F(CliTest, ConfigErrorsExitWithTwo) {
  json j = train_config(1.0);
  j["property"].erase("epsilon");
  Outcome r = cli("train --config " + write_config("noeps.json", j).string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("property.epsilon"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "run"));

  j = train_config(1.0);
  j["training"]["momentum"] = 0.9;
  j["schema_version"] = 2;
  r = cli("train --config " + write_config("unknown.json", j).string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("training.momentum"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("schema_version"), std::string::npos) << r.err;

  j = train_config(1.0);
  j["model"] = {{"checkpoint", "x"}};
  EXPECT_EQ(cli("train --config " + write_config("noarch.json", j).string()).code, 2);
  EXPECT_EQ(cli("retrain --config " + write_config("nock.json", train_config(1.0)).string()).code, 2);
  EXPECT_EQ(cli("bogus --config " + write_config("ok.json", train_config(1.0)).string()).code, 2);
  EXPECT_EQ(cli("train").code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST_F(CliTest, UnsupportedOpOnTheTransformPathExitsWithFour) {
  Graph g;
  const auto x = g.add_input("x", {1, 4});
  const auto w = g.add_variable("w", {4, 3});
  const auto h = g.add_op(OpKind::MatMul, {x, w});
  Attrs pack;
  pack.axis = 0;
  const auto p = g.add_op(OpKind::Pack, {h, h}, pack);
  Attrs sum;
  sum.axes = {0};
  sum.keepdims = false;
  g.mark_output(g.add_op(OpKind::Sum, {p}, sum));
  save_checkpoint(g, init_weights(g, 1), (dir_ / "packed").string());

  json j = train_config(1.0, "HybridZonotope");
  j["model"] = {{"checkpoint", "packed"}};
  j["property"] = {{"kind", "BallPromoted"}, {"epsilon", 0.1}};
  const Outcome r = cli("retrain --config " + write_config("retrain.json", j).string());
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("Pack"), std::string::npos) << r.err;

  // The same checkpoint is fine in Box, where Pack has a transformer.
  j["domain"] = "Box";
  j["property"] = {{"kind", "BallDemoted"}, {"epsilon", 0.1}};
  EXPECT_EQ(cli("retrain --config " + write_config("retrain_box.json", j).string()).code, 0);
}

TEST_F(CliTest, RetrainPrintsBeforeAndAfterRows) {
  ASSERT_EQ(cli("train --config " + write_config("train.json", train_config(0.0)).string()).code, 0);
  json j = train_config(1.0);
  j["model"] = {{"checkpoint", "run/checkpoint"}};
  j["out"] = "retrained";
  const Outcome r = cli("retrain --config " + write_config("retrain.json", j).string());
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(slurp(dir_ / "retrained" / "report.json"));
  ASSERT_EQ(rep["table"].size(), 2u);
  EXPECT_EQ(rep["table"][0]["model"], "Original");
  EXPECT_EQ(rep["table"][1]["model"], "Re-trained (Box)");
  EXPECT_NE(r.out.find("Re-trained (Box)"), std::string::npos);
}

TEST_F(CliTest, AttackFlipsAreConfirmedAndInsideTheRegion) {
  ASSERT_EQ(cli("train --config " + write_config("train.json", train_config(0.0)).string()).code, 0);
  for (double eps : {0.0, 1.5}) {
    json j = {{"schema_version", 1},
              {"dataset", blobs()},
              {"model", {{"checkpoint", "run/checkpoint"}}},
              {"property", {{"kind", "BallDemoted"}, {"epsilon", eps}}},
              {"attack", {{"examples", 12}, {"steps", 15}}},
              {"out", "atk"}};
    const Outcome r = cli("attack --config " + write_config("attack.json", j).string());
    ASSERT_EQ(r.code, 0) << r.err;
    const json rep = json::parse(slurp(dir_ / "atk" / "report.json"));
    ASSERT_EQ(rep["examples"].size(), 12u);
    std::size_t flips = 0;
    for (const auto& e : rep["examples"]) {
      EXPECT_LE(e["residual"].get<double>(), 1e-9);
      for (double d : e["perturbation"].get<std::vector<double>>()) EXPECT_LE(std::abs(d), eps + 1e-12);
      if (e["flipped"].get<bool>()) {
        ++flips;
        EXPECT_EQ(e["clean_prediction"], e["label"]);
        EXPECT_NE(e["replay_prediction"], e["label"]);
      }
    }
    EXPECT_EQ(rep["flips"].get<std::size_t>(), flips);
    if (eps == 0.0) {
      EXPECT_EQ(flips, 0u);
    } else {
      EXPECT_GT(flips, 0u);
    }
  }
}

TEST_F(CliTest, VerifyListsPerExampleStatus) {
  ASSERT_EQ(cli("train --config " + write_config("train.json", train_config(1.0)).string()).code, 0);
  json j = {{"schema_version", 1},
            {"dataset", blobs()},
            {"model", {{"checkpoint", "run/checkpoint"}}},
            {"property", {{"kind", "BallDemoted"}, {"epsilon", 0.3}}},
            {"verify", {{"examples", 30}}},
            {"out", "ver"}};
  const Outcome r = cli("verify --config " + write_config("verify.json", j).string());
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(slurp(dir_ / "ver" / "report.json"));
  ASSERT_EQ(rep["examples"].size(), 30u);
  std::size_t undecided = 0;
  for (const auto& e : rep["examples"]) undecided += e["status"] == "undecided";
  EXPECT_NEAR(rep["metrics"]["verify_error"].get<double>(), 100.0 * undecided / 30, 1e-9);
}
