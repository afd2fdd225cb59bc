/*
 * Copyright 2026 The gowermatch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gowermatch/gowermatch.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace gowermatch {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;
using testing::write_text;

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult RunCli(std::vector<std::string> args) {
  args.insert(args.begin(), "gowermatch");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> Snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      files[fs::relative(e.path(), dir).generic_string()] = read_text_file(e.path());
  return files;
}

// Pipeline fixture: enough noisy labeled rows that the calibrated confidence
// threshold is below 1 and both similar test classes occur.
struct PipelineFixture {
  TempDir dir;
  fs::path config;

  PipelineFixture() {
    auto r = RunCli({"synth", "--dir", dir.path.string(), "--labeled-per-cluster", "1000",
                  "--label-noise", "0.2", "--separation", "3", "--seed", "7"});
    EXPECT_EQ(r.code, 0) << r.err;
    config = dir / "config.json";
  }
  fs::path out() const { return dir / "out"; }
};

TEST(CliTest, CalibrateWritesPercentileAndBudget) {
  PipelineFixture f;
  ASSERT_EQ(RunCli({"--config", f.config.string(), "split"}).code, 0);
  ASSERT_EQ(RunCli({"--config", f.config.string(), "ranges"}).code, 0);
  auto r = RunCli({"--config", f.config.string(), "calibrate"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("calibrate: d=", 0), 0u);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1);

  auto params = nlohmann::json::parse(read_text_file(f.out() / "params.json"));
  auto schema = FeatureSchema::from_json(read_text_file(f.dir / "schema.json"));
  Dataset train = load_dataset(f.out() / "train.csv", schema);
  Dataset unl = load_dataset(f.dir / "unlabeled.csv", schema);
  RangeTable ranges = RangeTable::from_json(read_text_file(f.out() / "ranges.json"), schema);
  const double d = calibrate_similarity_threshold(train, ranges, 0.95);
  EXPECT_EQ(params["d"].get<double>(), d);
  const double c = params["c"].get<double>();
  EXPECT_LT(c, 1.0);
  auto votes = compute_votes(unl, train, ranges, d);
  EXPECT_LT(assigned_fraction(votes, c), 0.05);
  EXPECT_GT(assigned_fraction(votes, c), 0.0);
}

TEST(CliTest, MissingUpstreamArtifactNamesTheProducer) {
  PipelineFixture f;
  ASSERT_EQ(RunCli({"--config", f.config.string(), "split"}).code, 0);
  ASSERT_EQ(RunCli({"--config", f.config.string(), "calibrate", "--d", "0.9", "--c", "0.5"}).code,
            1);
  auto r = RunCli({"--config", f.config.string(), "match"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("run `ranges` first"), std::string::npos) << r.err;
  auto line = nlohmann::json::parse(r.err);
  EXPECT_EQ(line["status"], "error");
  EXPECT_EQ(line["command"], "match");
}

TEST(CliTest, FullPipelineProducesTableShapedReport) {
  PipelineFixture f;
  auto r = RunCli({"--config", f.config.string(), "report"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = nlohmann::json::parse(read_text_file(f.out() / "report.json"));
  ASSERT_EQ(report["testsets"].size(), 2u);
  EXPECT_EQ(report["testsets"][0]["name"], "real");
  EXPECT_EQ(report["testsets"][1]["name"], "similar");
  EXPECT_EQ(report["models"][1]["name"], "logistic_regression*");
  EXPECT_EQ(report["cells"].size(), 4u);
  for (const auto& cell : report["cells"]) EXPECT_TRUE(cell["auc"].is_number());
  ASSERT_EQ(report["augmentation_deltas"].size(), 2u);
  EXPECT_TRUE(report["augmentation_deltas"][0]["delta"].is_number());
  const std::string text = read_text_file(f.out() / "report.txt");
  EXPECT_NE(text.find("Test data (real)"), std::string::npos);
  EXPECT_NE(text.find("Test data (similar)"), std::string::npos);
  for (const char* file : {"grid.csv", "shell.csv", "recourse.json", "run/report.json"})
    EXPECT_TRUE(fs::exists(f.out() / file)) << file;
}

TEST(CliTest, RerunsAndWorkerCountsAreByteIdentical) {
  PipelineFixture f;
  const auto inputs = Snapshot(f.dir.path);
  ASSERT_EQ(RunCli({"--config", f.config.string(), "report", "--workers", "1"}).code, 0);
  const auto first = Snapshot(f.out());
  for (const char* w : {"2", "8"}) {
    ASSERT_EQ(RunCli({"--config", f.config.string(), "report", "--workers", w}).code, 0);
    EXPECT_EQ(Snapshot(f.out()), first) << "workers " << w;
  }
  // Inputs untouched.
  auto after = Snapshot(f.dir.path);
  for (const auto& [name, content] : inputs) EXPECT_EQ(after.at(name), content) << name;
}

TEST(CliTest, ValidationListsEveryViolation) {
  PipelineFixture f;
  auto r = RunCli({"--config", f.config.string(), "split", "--fraction", "1.5", "--budget",
                "-0.1", "--workers", "0"});
  EXPECT_EQ(r.code, 1);
  auto line = nlohmann::json::parse(r.err);
  EXPECT_EQ(line["kind"], "validation");
  EXPECT_EQ(line["violations"].size(), 3u);

  write_text(f.dir / "bad.json", R"({"labeled": "labeled.csv", "percentle": 0.9, "model": {"l3": 1}})");
  r = RunCli({"--config", (f.dir / "bad.json").string(), "split"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(nlohmann::json::parse(r.err)["violations"].size(), 2u);

  r = RunCli({"--config", f.config.string(), "split", "--labeled", (f.dir / "nope.csv").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("not found"), std::string::npos);
}

TEST(CliTest, UsageErrors) {
  EXPECT_EQ(RunCli({}).code, 2);
  EXPECT_EQ(RunCli({"frobnicate"}).code, 2);
  auto help = RunCli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("probe-shell"), std::string::npos);
}

TEST(CliTest, OutputDirectoryFromEnvironment) {
  PipelineFixture f;
  const fs::path env_out = f.dir / "env_out";
  ::setenv("GOWERMATCH_OUT", env_out.c_str(), 1);
  auto r = RunCli({"split", "--labeled", (f.dir / "labeled.csv").string(), "--schema",
                (f.dir / "schema.json").string()});
  ::unsetenv("GOWERMATCH_OUT");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(env_out / "train.csv"));
}

TEST(CliTest, ExternalScoresJoinTheTable) {
  PipelineFixture f;
  ASSERT_EQ(RunCli({"--config", f.config.string(), "report"}).code, 0);
  // A constant "external model" covering both test sets.
  std::string scores = "id,score\n";
  auto schema = FeatureSchema::from_json(read_text_file(f.dir / "schema.json"));
  for (const char* file : {"test.csv", "similar_test.csv"})
    for (const auto& s : load_dataset(f.out() / file, schema).rows)
      scores += s.id + ",0.5\n";
  write_text(f.dir / "ext.csv", scores);
  auto cfg = nlohmann::json::parse(read_text_file(f.config));
  cfg["external_scores"] = {{{"name", "constant"}, {"path", "ext.csv"}}};
  write_text(f.config, cfg.dump());
  auto r = RunCli({"--config", f.config.string(), "evaluate"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = nlohmann::json::parse(read_text_file(f.out() / "report.json"));
  EXPECT_EQ(report["cells"].size(), 6u);
  EXPECT_EQ(report["comparisons"].size(), 6u);
  EXPECT_EQ(report["cells"][4]["auc"], 0.5);
}

}  // namespace
}  // namespace gowermatch
