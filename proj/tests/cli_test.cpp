/* Copyright 2026 The PromptBench Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "promptbench/cli.hpp"
#include "support/mock_segmenter.hpp"
#include "support/synthetic_data.hpp"
#include "support/temp_dir.hpp"

namespace promptbench {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "promptbench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const json kSmall = {{"strategies", {"random", "entropy"}}};

testing::ToyFiles toy(const testing::TempDir& tmp, json overrides = kSmall, int count = 5) {
  return testing::write_toy_files(tmp.path(), {.count = count}, overrides);
}

TEST(Cli, VersionHelpAndUsageErrors) {
  EXPECT_EQ(run_cli({"--version"}).code, 0);
  EXPECT_NE(run_cli({"--version"}).out.find(cli::kVersion), std::string::npos);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"sample"}).code, 2);  // --config is required
  EXPECT_EQ(run_cli({"sample", "--config", "x.json", "--jobs", "0"}).code, 2);
}

TEST(Cli, ConfigErrorsExitTwo) {
  testing::TempDir tmp;
  const auto f = toy(tmp);
  for (const json& bad : {json{{"bogus", 1}}, json{{"master_seed", -1}},
                          json{{"oracle", {{"type", "magic"}}}},
                          json{{"strategies", {"random", "nope"}}},
                          json{{"budget", {{"max_multiplier", 0.5}}}}}) {
    auto cfg = json::parse(slurp(f.config));
    cfg.merge_patch(bad);
    std::ofstream(tmp / "bad.json") << cfg.dump();
    const auto r = run_cli({"sample", "--config", (tmp / "bad.json").string()});
    EXPECT_EQ(r.code, 2) << bad.dump() << " " << r.err;
  }
  std::ofstream(tmp / "broken.json") << "{ not json";
  EXPECT_EQ(run_cli({"sample", "--config", (tmp / "broken.json").string()}).code, 2);
  std::ofstream(tmp / "c.toml") << "master_seed = 1\n";
  EXPECT_EQ(run_cli({"sample", "--config", (tmp / "c.toml").string()}).code, 2);
  EXPECT_EQ(run_cli({"sample", "--config", (tmp / "missing.json").string()}).code, 2);
}

TEST(Cli, DataErrorsExitThreeAndLeaveNoOutput) {
  testing::TempDir tmp;
  const auto f = toy(tmp);
  fs::remove(tmp / "masks" / "img2.png");
  const auto r = run_cli({"sample", "--config", f.config.string()});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_FALSE(fs::exists(tmp / "out"));
  EXPECT_FALSE(fs::exists(tmp / "out.partial"));
}

TEST(Cli, SampleIsDeterministicAcrossJobs) {
  testing::TempDir tmp;
  const auto f = toy(tmp);
  const std::string cfg = f.config.string();
  ASSERT_EQ(run_cli({"sample", "--config", cfg, "--mode", "both", "--n", "3", "--jobs", "1",
                     "--out", (tmp / "a").string()}).code, 0);
  ASSERT_EQ(run_cli({"sample", "--config", cfg, "--mode", "both", "--n", "3", "--jobs", "8",
                     "--out", (tmp / "b").string()}).code, 0);
  ASSERT_EQ(run_cli({"sample", "--config", cfg, "--mode", "both", "--n", "3", "--seed", "43",
                     "--out", (tmp / "c").string()}).code, 0);
  for (const char* s : {"random", "entropy"}) {
    const auto a = slurp(tmp / "a" / "toy" / (std::string(s) + ".jsonl"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(tmp / "b" / "toy" / (std::string(s) + ".jsonl")));
    if (std::string(s) == "random") {
      EXPECT_NE(a, slurp(tmp / "c" / "toy" / (std::string(s) + ".jsonl")));
    }
  }
  // Sampled files are valid prompt logs for the dataset.
  const auto manifest = load_manifest(f.manifest);
  const auto log = load_prompt_log(tmp / "a" / "toy" / "random.jsonl", manifest);
  for (const auto& [key, set] : log.sets) {
    EXPECT_EQ(key.first, "random");
    EXPECT_EQ(set.inclusion.size(), 3u);
    EXPECT_EQ(set.exclusion.size(), 3u);
  }
  const auto m = json::parse(slurp(tmp / "a" / "run_manifest.json"));
  EXPECT_EQ(m["command"], "sample");
  EXPECT_EQ(m["master_seed"], 42);
  EXPECT_EQ(m["version"], cli::kVersion);
  EXPECT_FALSE(m["inputs"].empty());
  EXPECT_EQ(m["inputs"][0]["content_hash"].get<std::string>().size(), 32u);
}

TEST(Cli, OptimizeWritesTraceAndBudget) {
  testing::TempDir tmp;
  const auto f = toy(tmp, {{"strategies", {"random"}}}, 3);
  const auto r = run_cli({"optimize", "--config", f.config.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto result = json::parse(slurp(tmp / "out" / "toy" / "budget_random.json"));
  std::istringstream trace(slurp(tmp / "out" / "toy" / "budget_random.csv"));
  const auto csv = read_csv(trace);
  ASSERT_FALSE(csv.rows.empty());
  double best = 0;
  for (const auto& row : csv.rows) best = std::max(best, std::stod(row[2]));
  EXPECT_NEAR(result["miou"].get<double>(), best, 1e-9) << result.dump();
}

TEST(Cli, ExperimentThenReport) {
  testing::TempDir tmp;
  const auto f = toy(tmp, {{"strategies", {"random", "maxdist"}}}, 4);
  const auto r = run_cli({"experiment", "--config", f.config.string(), "--jobs", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path out = tmp / "out";
  for (const char* file : {"comparison.csv", "records.csv", "report.md", "run_manifest.json",
                           "toy/budget_random.csv", "toy/prompts_maxdist.jsonl"})
    EXPECT_TRUE(fs::exists(out / file)) << file;
  std::istringstream in(slurp(out / "comparison.csv"));
  auto tables = read_comparison_csv(in);
  ASSERT_EQ(tables.size(), 3u);
  attach_baselines(tables);
  const auto g = summarize_gap(tables);
  EXPECT_EQ(g.automated_cells, 2u);
  EXPECT_EQ(g.human_exclusion_cells, 2u);

  const auto rep = run_cli({"report", "--input", (out / "comparison.csv").string()});
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_EQ(rep.out, render_markdown(tables));
  const auto rep2 = run_cli({"report", "--input", (out / "comparison.csv").string(), "--out",
                             (tmp / "rep").string()});
  ASSERT_EQ(rep2.code, 0);
  EXPECT_EQ(slurp(tmp / "rep" / "report.md"), rep.out);
  EXPECT_EQ(run_cli({"report", "--input", (tmp / "none.csv").string()}).code, 3);

  // Mixed protocols without logs are a data error.
  auto cfg = json::parse(slurp(f.config));
  cfg["datasets"][0].erase("prompt_log");
  std::ofstream(tmp / "nolog.json") << cfg.dump();
  EXPECT_EQ(run_cli({"experiment", "--config", (tmp / "nolog.json").string(), "--protocol",
                     "human_inclusion"}).code, 3);
  EXPECT_EQ(run_cli({"experiment", "--config", (tmp / "nolog.json").string(), "--protocol",
                     "sideways"}).code, 2);
}

TEST(Cli, FeaturesThenDecode) {
  testing::TempDir tmp;
  const auto f = toy(tmp, kSmall, 6);
  ASSERT_EQ(run_cli({"sample", "--config", f.config.string(), "--strategy", "random", "--mode",
                     "both", "--n", "2", "--out", (tmp / "s").string()}).code, 0);
  const auto r = run_cli({"features", "--config", f.config.string(), "--out",
                          (tmp / "feat").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(slurp(tmp / "feat" / "features.csv"));
  const auto rows = read_feature_csv(in);
  EXPECT_EQ(rows.size(), 12u);  // two annotators, six images

  const auto r2 = run_cli({"features", "--config", f.config.string(), "--prompts",
                           (tmp / "s" / "toy" / "random.jsonl").string(), "--out",
                           (tmp / "feat2").string()});
  ASSERT_EQ(r2.code, 0) << r2.err;
  std::istringstream in2(slurp(tmp / "feat2" / "features.csv"));
  const auto rows2 = read_feature_csv(in2);
  ASSERT_EQ(rows2.size(), 6u);
  EXPECT_EQ(rows2[0].source, "random");

  const auto d = run_cli({"decode", "--features", (tmp / "feat" / "features.csv").string(),
                          "--seed", "3", "--out", (tmp / "dec").string()});
  ASSERT_EQ(d.code, 0) << d.err;
  const auto report = json::parse(slurp(tmp / "dec" / "decoding.json"));
  ASSERT_EQ(report.size(), 1u);
  EXPECT_EQ(report[0]["n_rows"], 12);
  EXPECT_EQ(report[0]["n_test"], 3);
  EXPECT_TRUE(fs::exists(tmp / "dec" / "pearson.csv"));
  EXPECT_EQ(run_cli({"decode", "--features", (tmp / "feat2" / "features.csv").string(), "--out",
                     (tmp / "dec2").string()}).code, 3);  // 6 rows are too few
  EXPECT_EQ(run_cli({"decode", "--features", (tmp / "feat" / "features.csv").string(), "--ridge",
                     "-1", "--out", (tmp / "dec3").string()}).code, 2);
}

TEST(Cli, ConvertBuildsALoadableManifest) {
  testing::TempDir tmp;
  toy(tmp, kSmall, 3);
  const auto r = run_cli({"convert", "--images", (tmp / "images").string(), "--masks",
                          (tmp / "masks").string(), "--dataset-id", "conv", "--out",
                          (tmp / "m" / "manifest.json").string(), "--object-density", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = load_manifest(tmp / "m" / "manifest.json");
  EXPECT_EQ(m.dataset_id, "conv");
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.entries[0].object_density, 2);
  fs::remove(tmp / "masks" / "img1.png");
  EXPECT_EQ(run_cli({"convert", "--images", (tmp / "images").string(), "--masks",
                     (tmp / "masks").string(), "--dataset-id", "conv", "--out",
                     (tmp / "m2.json").string()}).code, 3);
  EXPECT_FALSE(fs::exists(tmp / "m2.json.partial"));
}

TEST(Cli, RemoteOracleMatchesLocalSynthetic) {
  testing::MockSegmenter server;
  testing::TempDir tmp;
  const auto f = toy(tmp, {{"strategies", {"random"}}}, 3);
  auto cfg = json::parse(slurp(f.config));
  cfg["oracle"] = {{"type", "synthetic"}, {"seed", 0}};
  std::ofstream(tmp / "local.json") << cfg.dump();
  cfg["oracle"] = {{"type", "remote"}, {"url", server.url()}, {"max_in_flight", 2}};
  std::ofstream(tmp / "remote.json") << cfg.dump();
  const auto a = run_cli({"features", "--config", (tmp / "local.json").string(), "--out",
                          (tmp / "a").string()});
  const auto b = run_cli({"features", "--config", (tmp / "remote.json").string(), "--out",
                          (tmp / "b").string(), "--jobs", "4"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(slurp(tmp / "a" / "features.csv"), slurp(tmp / "b" / "features.csv"));
  EXPECT_EQ(server.requests(), 6);
  EXPECT_EQ(server.invalid_requests(), 0);
  EXPECT_LE(server.max_in_flight(), 2);
}

TEST(Cli, RemoteFailureExitsFour) {
  testing::MockSegmenter server([](int) { return 500; });
  testing::TempDir tmp;
  const auto f = toy(tmp, kSmall, 2);
  auto cfg = json::parse(slurp(f.config));
  cfg["oracle"] = {{"type", "remote"}, {"url", server.url()}, {"attempts", 2},
                   {"initial_backoff_ms", 1}};
  std::ofstream(tmp / "remote.json") << cfg.dump();
  const auto r = run_cli({"features", "--config", (tmp / "remote.json").string()});
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_FALSE(fs::exists(tmp / "out"));
}

// The installed binary reports the same exit codes as the in-process entry point.
TEST(CliBinary, ExitCodes) {
  const std::string bin = PROMPTBENCH_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int s = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("--version"), 0);
  EXPECT_EQ(status("nonsense"), 2);
  testing::TempDir tmp;
  EXPECT_EQ(status("report --input " + (tmp / "missing.csv").string()), 3);
}

}  // namespace
}  // namespace promptbench
