// Copyright 2026 The dpfl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dpfl/bench/chart.hpp"
#include "dpfl/bench/config.hpp"
#include "dpfl/bench/experiment.hpp"
#include "dpfl/bench/metrics.hpp"

#ifndef DPFL_SOURCE_DIR
#define DPFL_SOURCE_DIR "."
#endif

namespace dpfl::bench {
namespace {

namespace fs = std::filesystem;

int error_line(const std::string& text) {
  try {
    parse_experiment_config(IniDocument::parse_string(text, "t.ini"));
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() /
            ("dpfl_bench_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

TEST(ConfigTest, ErrorsNameTheOffendingLine) {
  EXPECT_EQ(error_line("[experiment]\nmethods = C\n\n[data]\nhospitals = x\n"), 5);
  EXPECT_EQ(error_line("[experiment]\nmethods = C, XYZ\n"), 2);
  EXPECT_EQ(error_line("[experiment]\nbogus = 1\n"), 2);
  EXPECT_EQ(error_line("[experiment]\n[nope]\n"), 2);
  EXPECT_EQ(error_line("[defaults]\nq = 0.1\nq = 0.2\n"), 3);
  EXPECT_EQ(error_line("[defaults]\ncalibration = sometimes\n"), 2);
  EXPECT_EQ(error_line("key = 1\n"), 1);
  EXPECT_EQ(error_line("[data\n"), 1);
  EXPECT_EQ(error_line("[experiment]\nsecure = maybe\n"), 2);
}

TEST(ConfigTest, CrossFieldErrorsPointAtSection) {
  // q outside (0, 1] is caught by validation, reported at the method section.
  EXPECT_EQ(error_line("[experiment]\nmethods = CDP\n\n[CDP]\nq = 1.5\n"), 4);
  EXPECT_EQ(error_line("[experiment]\nmethods = C\n[data]\nhospitals = 0\n"), 3);
}

TEST(ConfigTest, MessageIncludesSourceAndLine) {
  try {
    parse_experiment_config(IniDocument::parse_string("[data]\nfeatures = -\n", "cfg.ini"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.ini:2"), std::string::npos) << e.what();
  }
}

TEST(ConfigTest, MissingFileIsConfigError) {
  EXPECT_THROW(load_experiment_config("/nonexistent/dpfl.ini"), ConfigError);
}

TEST(ConfigTest, CommentsAndDefaults) {
  const auto cfg = parse_experiment_config(IniDocument::parse_string(
      "# top\n[experiment]\nmethods = F ; trailing\nseeds = 3,4\n[defaults]\nsigma = 2.5\n"
      "[F]\nsigma = 0.5\n"));
  ASSERT_EQ(cfg.methods.size(), 1u);
  EXPECT_EQ(cfg.methods[0], Method::kF);
  EXPECT_EQ(cfg.seeds, (std::vector<uint64_t>{3, 4}));
  EXPECT_DOUBLE_EQ(cfg.run_config(Method::kF).dp.sigma, 0.5);
  EXPECT_DOUBLE_EQ(cfg.run_config(Method::kCDP).dp.sigma, 2.5);
  EXPECT_EQ(cfg.run_config(Method::kF).dp.num_hospitals, 10);
}

TEST(ConfigTest, ShippedConfigsParse) {
  const auto smoke = load_experiment_config(DPFL_SOURCE_DIR "/configs/smoke.ini");
  EXPECT_EQ(smoke.methods.size(), 5u);
  EXPECT_EQ(smoke.data.hospitals, 4u);
  EXPECT_EQ(smoke.secure, AggregationMode::kSecure);
  const auto fig = load_experiment_config(DPFL_SOURCE_DIR "/configs/five_methods.ini");
  EXPECT_EQ(fig.data.hospitals, 10u);
  EXPECT_EQ(fig.run_config(Method::kDopamine).dp.max_rounds, 100);
}

MetricsRecord record(const std::string& m, uint64_t seed, int round, double acc, double loss,
                     std::optional<double> eps) {
  MetricsRecord r;
  r.method = m;
  r.seed = seed;
  r.round = round;
  r.test_accuracy = acc;
  r.train_loss = loss;
  r.epsilon_hat = eps;
  if (eps) r.delta = 1e-4;
  r.batch_sizes = {3, 0, 5};
  r.empty_batches = 1;
  return r;
}

TEST(MetricsTest, CsvRoundTripIsExact) {
  std::vector<MetricsRecord> in = {record("CDP", 1, 1, 0.1 + 0.2, 1.0 / 3.0, 0.123456789012345),
                                   record("CDP", 2, 1, 0.7, 2.0, std::nullopt)};
  in[1].batch_sizes.clear();
  in[0].wall_ms = 12.5;
  const std::string csv = metrics_csv(in);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  std::istringstream s(csv);
  const auto out = parse_metrics_csv(s);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].test_accuracy, in[0].test_accuracy);
  EXPECT_EQ(out[0].train_loss, in[0].train_loss);
  EXPECT_EQ(*out[0].epsilon_hat, *in[0].epsilon_hat);
  EXPECT_EQ(out[0].batch_sizes, in[0].batch_sizes);
  EXPECT_EQ(*out[0].wall_ms, 12.5);
  EXPECT_FALSE(out[1].epsilon_hat);
  EXPECT_FALSE(out[1].delta);
  EXPECT_TRUE(out[1].batch_sizes.empty());
  EXPECT_EQ(metrics_csv(out), csv);
}

TEST(MetricsTest, MalformedCsvIsRejected) {
  std::istringstream bad_header("nope\n");
  EXPECT_THROW(parse_metrics_csv(bad_header), InvalidArgument);
  std::istringstream short_row(std::string(kMetricsHeader) + "\nC,1,1\n");
  EXPECT_THROW(parse_metrics_csv(short_row), InvalidArgument);
}

TEST(MetricsTest, SummaryUsesSampleStd) {
  std::vector<MetricsRecord> rs = {record("DOPAMINE", 1, 1, 0.5, 1.0, 1.0),
                                   record("DOPAMINE", 2, 1, 0.7, 3.0, 2.0),
                                   record("DOPAMINE", 3, 1, 0.9, 5.0, 3.0),
                                   record("DOPAMINE", 1, 2, 0.8, 0.5, 4.0)};
  const auto rows = summarize(rs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].n_seeds, 3u);
  EXPECT_NEAR(rows[0].accuracy_mean, 0.7, 1e-15);
  EXPECT_NEAR(rows[0].accuracy_std, 0.2, 1e-15);
  EXPECT_NEAR(rows[0].loss_std, 2.0, 1e-15);
  EXPECT_NEAR(*rows[0].epsilon_std, 1.0, 1e-15);
  EXPECT_EQ(rows[1].n_seeds, 1u);
  EXPECT_EQ(rows[1].accuracy_std, 0.0);
}

TEST(MetricsTest, NonPrivateSummaryHasNoEpsilon) {
  const auto rows = summarize({record("C", 1, 1, 0.5, 1.0, std::nullopt)});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].epsilon_mean);
  const std::string csv = summary_csv(rows);
  EXPECT_EQ(csv.substr(csv.size() - 3), ",,\n");
}

TEST(ChartTest, EpsilonChartOmitsNonPrivateMethods) {
  std::map<std::string, std::vector<MetricsRecord>> m;
  m["C"] = {record("C", 1, 1, 0.5, 1.0, std::nullopt)};
  m["F"] = {record("F", 1, 1, 0.6, 1.0, std::nullopt)};
  m["CDP"] = {record("CDP", 1, 1, 0.4, 1.0, 0.3)};
  m["DOPAMINE"] = {record("DOPAMINE", 1, 1, 0.45, 1.0, 0.2)};
  const auto charts = build_charts(m);
  EXPECT_EQ(charts.accuracy_methods, (std::vector<std::string>{"C", "CDP", "DOPAMINE", "F"}));
  EXPECT_EQ(charts.epsilon_methods, (std::vector<std::string>{"CDP", "DOPAMINE"}));
  EXPECT_NE(charts.accuracy_svg.find("<svg"), std::string::npos);
  EXPECT_NE(charts.epsilon_svg.find("delta = 0.0001"), std::string::npos);
  m.erase("CDP");
  m.erase("DOPAMINE");
  EXPECT_TRUE(build_charts(m).epsilon_svg.empty());
  EXPECT_THROW(build_charts({}), InvalidArgument);
}

TEST(FilesTest, AtomicWriteReplacesContent) {
  TempDir dir("atomic");
  const fs::path p = dir.path() / "x.csv";
  write_file_atomic(p, "one\n");
  write_file_atomic(p, "two\n");
  EXPECT_EQ(read_all(p), "two\n");
  EXPECT_FALSE(fs::exists(dir.path() / "x.csv.tmp"));
}

ExperimentConfig tiny_config(const fs::path& out) {
  auto cfg = load_experiment_config(DPFL_SOURCE_DIR "/configs/smoke.ini");
  cfg.out_dir = out.string();
  for (auto& [m, rc] : cfg.runs) rc.dp.max_rounds = 3;
  return cfg;
}

TEST(ExperimentTest, RerunIsByteIdentical) {
  TempDir a("rerun_a"), b("rerun_b");
  const auto out_a = run_experiment(tiny_config(a.path()));
  run_experiment(tiny_config(b.path()));
  for (const auto& name : {"metrics_C.csv", "metrics_CDP.csv", "metrics_F.csv",
                           "metrics_FPDP.csv", "metrics_DOPAMINE.csv", "summary.csv"}) {
    ASSERT_TRUE(fs::exists(a.path() / name)) << name;
    EXPECT_EQ(read_all(a.path() / name), read_all(b.path() / name)) << name;
  }
  // 5 methods x 3 rounds.
  EXPECT_EQ(out_a.summary.size(), 15u);
  const auto metrics = read_metrics_dir(a.path());
  EXPECT_EQ(metrics.size(), 5u);
  EXPECT_EQ(metrics.at("CDP").size(), 6u);  // 2 seeds x 3 rounds
  for (const auto& r : metrics.at("C")) EXPECT_FALSE(r.epsilon_hat);
  for (const auto& r : metrics.at("DOPAMINE")) {
    ASSERT_TRUE(r.epsilon_hat);
    EXPECT_EQ(r.batch_sizes.size(), 4u);
    EXPECT_FALSE(r.wall_ms);
  }
}

TEST(ExperimentTest, SummaryMatchesRecomputation) {
  TempDir dir("summary");
  auto cfg = tiny_config(dir.path());
  cfg.methods = {Method::kCDP};
  run_experiment(cfg);
  std::ifstream in(metrics_path(dir.path(), "CDP"));
  const auto records = parse_metrics_csv(in);
  EXPECT_EQ(read_all(dir.path() / "summary.csv"), summary_csv(summarize(records)));
}

TEST(ExperimentTest, EpsilonIsNonDecreasingPerSeed) {
  TempDir dir("eps");
  auto cfg = tiny_config(dir.path());
  cfg.methods = {Method::kDopamine, Method::kFPDP};
  run_experiment(cfg);
  for (const auto& [method, records] : read_metrics_dir(dir.path())) {
    std::map<uint64_t, double> last;
    for (const auto& r : records) {
      ASSERT_TRUE(r.epsilon_hat) << method;
      auto it = last.find(r.seed);
      if (it != last.end()) {
        EXPECT_GE(*r.epsilon_hat, it->second) << method;
      }
      last[r.seed] = *r.epsilon_hat;
    }
  }
}

}  // namespace
}  // namespace dpfl::bench
