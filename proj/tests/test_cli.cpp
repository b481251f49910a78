#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "config.hpp"

namespace fs = std::filesystem;
using namespace edgelab::cli;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() / ("edge_lab_cli_" + std::string(info->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string write_config(const std::string& name, const json& j) const {
    const fs::path p = root_ / (name + ".json");
    std::ofstream(p) << j.dump(2);
    return p.string();
  }

  int run(const std::string& cmd, const json& config, const std::string& out = "out") {
    CommandArgs a;
    a.config_path = write_config(cmd + "_" + out, config);
    a.out_dir = (root_ / out).string();
    return run_command(cmd, a, log_);
  }

  std::string read(const std::string& rel) const {
    std::ifstream is(root_ / rel);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  json read_json(const std::string& rel) const { return json::parse(read(rel)); }

  std::string config_error(const std::string& cmd, const json& config) {
    try {
      run(cmd, config);
    } catch (const ConfigError& e) {
      return e.path();
    }
    return "<no error>";
  }

  static json quadratic_run() {
    return {{"model", {{"kind", "quadratic"}, {"eigenvalues", {3.0}}, {"rotate", false}}},
            {"eta", 0.5},
            {"steps", 30}};
  }

  fs::path root_;
  std::ostringstream log_;
};

}  // namespace

TEST_F(CliTest, CommandNames) {
  EXPECT_EQ(command_names(), (std::vector<std::string>{"run", "balance", "bifurcate", "strain", "verify"}));
  CommandArgs a;
  a.config_path = write_config("x", json::object());
  EXPECT_THROW(run_command("nope", a, log_), ConfigError);
}

TEST_F(CliTest, RunWritesOutputsAndResolvedDefaults) {
  ASSERT_EQ(run("run", quadratic_run()), kExitOk);
  for (const char* f : {"trajectory.csv", "metrics.csv", "report.json", "resolved_config.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "out" / f)) << f;
  }
  EXPECT_FALSE(fs::exists(root_ / "out" / "sharpness.csv"));
  const json resolved = read_json("out/resolved_config.json");
  EXPECT_EQ(resolved["steps"], 30);
  EXPECT_TRUE(resolved.contains("init"));
  EXPECT_TRUE(resolved.contains("localize"));
  const json report = read_json("out/report.json");
  EXPECT_NEAR(report["edge"].get<double>(), 4.0, 1e-15);
  EXPECT_NEAR(report["lambda_max_initial"].get<double>(), 3.0, 1e-9);
}

TEST_F(CliTest, RunIsDeterministicAndSeedOverrides) {
  ASSERT_EQ(run("run", quadratic_run(), "a"), kExitOk);
  ASSERT_EQ(run("run", quadratic_run(), "b"), kExitOk);
  EXPECT_EQ(read("a/trajectory.csv"), read("b/trajectory.csv"));
  EXPECT_EQ(read("a/metrics.csv"), read("b/metrics.csv"));
  EXPECT_EQ(read("a/report.json"), read("b/report.json"));

  CommandArgs c;
  c.config_path = write_config("seeded", quadratic_run());
  c.out_dir = (root_ / "c").string();
  c.seed = 99;
  ASSERT_EQ(run_command("run", c, log_), kExitOk);
  EXPECT_EQ(read_json("c/resolved_config.json")["seed"], 99);
  EXPECT_NE(read("a/trajectory.csv"), read("c/trajectory.csv"));
}

TEST_F(CliTest, DivergenceExitCode) {
  json j = quadratic_run();
  j["eta"] = 1.0;
  j["steps"] = 200;
  EXPECT_EQ(run("run", j), kExitDivergence);
}

TEST_F(CliTest, ConfigErrorsCarryPaths) {
  json unknown = quadratic_run();
  unknown["bogus"] = 1;
  EXPECT_EQ(config_error("run", unknown), "$.bogus");

  json nested = quadratic_run();
  nested["model"]["colour"] = "red";
  EXPECT_EQ(config_error("run", nested), "$.model.colour");

  json both = quadratic_run();
  both["eta_edge_fraction"] = 0.5;
  EXPECT_EQ(config_error("run", both), "$");

  json neg = quadratic_run();
  neg["eta"] = -0.1;
  EXPECT_EQ(config_error("run", neg), "$.eta");

  json kind = quadratic_run();
  kind["model"]["kind"] = "transformer";
  EXPECT_EQ(config_error("run", kind), "$.model.kind");

  json steps = quadratic_run();
  steps["steps"] = 0;
  EXPECT_EQ(config_error("run", steps), "$.steps");

  EXPECT_EQ(config_error("verify", {{"suite", "criteria"}, {"criteria", {3, 42}}}), "$.criteria[1]");
}

TEST_F(CliTest, MissingConfigFileIsAConfigError) {
  CommandArgs a;
  a.config_path = (root_ / "absent.json").string();
  EXPECT_THROW(run_command("run", a, log_), ConfigError);
}

TEST_F(CliTest, EdgeFractionResolvesAgainstInitialSharpness) {
  json j = quadratic_run();
  j.erase("eta");
  j["eta_edge_fraction"] = 0.5;
  ASSERT_EQ(run("run", j), kExitOk);
  // η = fraction·2/λ₀ = 1/3, so the edge is 6.
  EXPECT_NEAR(read_json("out/report.json")["edge"].get<double>(), 6.0, 1e-8);
}

TEST_F(CliTest, StrainIdenticalPairIsZero) {
  const json j = {{"model", {{"kind", "quadratic"}, {"eigenvalues", {1.0, 2.0}}, {"seed", 2}}},
                  {"pair", {{"kind", "identical"}}},
                  {"eta", 0.5},
                  {"steps", 20}};
  ASSERT_EQ(run("strain", j), kExitOk);
  EXPECT_TRUE(fs::exists(root_ / "out" / "strain.csv"));
  std::ifstream is(root_ / "out" / "strain.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line.rfind("k,strain_norm", 0), 0u);
  while (std::getline(is, line)) {
    const std::string second = line.substr(line.find(',') + 1);
    EXPECT_EQ(std::stod(second.substr(0, second.find(','))), 0.0) << line;
  }
}

TEST_F(CliTest, BifurcateQuarticFit) {
  const json j = {{"model", {{"kind", "scalar_poly"}, {"lambda", 1.0}, {"beta", -1.0}}},
                  {"eta_grid", {2.001, 2.003, 2.01, 2.03}}};
  ASSERT_EQ(run("bifurcate", j), kExitOk);
  const json fit = read_json("out/fit.json");
  EXPECT_TRUE(fs::exists(root_ / "out" / "branch.csv"));
  ASSERT_TRUE(fit.is_object());
  EXPECT_NE(fit.dump().find("exponent"), std::string::npos);
}

TEST_F(CliTest, BalanceGrid) {
  const json j = {{"model", {{"kind", "quadratic"}, {"eigenvalues", {0.5, 1.0, 2.0}}, {"seed", 1}}},
                  {"eta_grid", {0.2, 0.6}},
                  {"steps", 50}};
  ASSERT_EQ(run("balance", j), kExitOk);
  EXPECT_TRUE(fs::exists(root_ / "out" / "balance_0.csv"));
  EXPECT_TRUE(fs::exists(root_ / "out" / "balance_1.csv"));
  EXPECT_TRUE(fs::exists(root_ / "out" / "summary.json"));
}

TEST_F(CliTest, VerifyTrajectoryRejectsCorruptedLog) {
  ASSERT_EQ(run("run", quadratic_run(), "src"), kExitOk);
  const json model = quadratic_run()["model"];
  const std::string good = (root_ / "src" / "trajectory.csv").string();
  EXPECT_EQ(run("verify", {{"suite", "trajectory"}, {"trajectory", {{"path", good}, {"eta", 0.5}, {"model", model}}}},
                "ok"),
            kExitOk);

  // Replace the loss on the third data row.
  std::string text = read("src/trajectory.csv");
  std::istringstream in(text);
  std::ostringstream outp;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (row == 3) {
      const auto a = line.find(','), b = line.find(',', a + 1);
      line = line.substr(0, a + 1) + "123.0" + line.substr(b);
    }
    outp << line << "\n";
    ++row;
  }
  const fs::path bad = root_ / "bad.csv";
  std::ofstream(bad) << outp.str();
  EXPECT_EQ(run("verify",
                {{"suite", "trajectory"}, {"trajectory", {{"path", bad.string()}, {"eta", 0.5}, {"model", model}}}},
                "bad"),
            kExitAssertion);
  const json rep = read_json("bad/verify_report.json");
  EXPECT_FALSE(rep["pass"].get<bool>());
  bool loss_failed = false;
  for (const auto& c : rep["checks"]) loss_failed |= c["id"] == "log.loss_replay" && !c["pass"].get<bool>();
  EXPECT_TRUE(loss_failed);
}

TEST_F(CliTest, VerifyQuickPasses) {
  EXPECT_EQ(run("verify", {{"suite", "quick"}}), kExitOk);
  EXPECT_TRUE(read_json("out/verify_report.json")["pass"].get<bool>());
}

TEST(ThreadCap, Parsing) {
  EXPECT_FALSE(parse_thread_cap(nullptr).has_value());
  EXPECT_FALSE(parse_thread_cap("").has_value());
  EXPECT_EQ(parse_thread_cap("4"), 4u);
  EXPECT_THROW(parse_thread_cap("0"), ConfigError);
  EXPECT_THROW(parse_thread_cap("two"), ConfigError);
  EXPECT_THROW(parse_thread_cap("-3"), ConfigError);
}

TEST(ConfigNode, StrictReader) {
  json resolved;
  const json j = {{"a", 1.5}, {"b", {1, 2}}, {"c", "x"}, {"d", {{"e", true}}}};
  Node n(j, "$", resolved);
  EXPECT_DOUBLE_EQ(n.number("a"), 1.5);
  EXPECT_EQ(n.integers("b", 0), (std::vector<std::int64_t>{1, 2}));
  EXPECT_EQ(n.choice("c", {"x", "y"}), "x");
  Node d = n.object("d");
  EXPECT_TRUE(d.boolean("e"));
  EXPECT_DOUBLE_EQ(n.number("f", 2.0), 2.0);
  d.finish();
  n.finish();
  EXPECT_DOUBLE_EQ(resolved["f"].get<double>(), 2.0);

  json r2;
  Node m(j, "$", r2);
  try {
    m.integer("a");
    FAIL() << "expected a type error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "$.a");
  }
  try {
    m.number("missing");
    FAIL() << "expected a missing-key error";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "$.missing");
  }
  EXPECT_THROW(m.choice("c", {"y"}), ConfigError);
}
