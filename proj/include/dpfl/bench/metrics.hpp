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

// Metrics CSV files.
//
// Per-method file metrics_<METHOD>.csv, one row per (seed, round):
//   method,seed,round,train_loss,test_accuracy,epsilon_hat,delta,
//   batch_sizes,empty_batches,wall_ms
// epsilon_hat and delta are empty for non-private methods; batch_sizes is a
// ';'-joined list (one entry per DP step in the round); wall_ms is empty
// unless wall-clock recording was requested, so reruns are byte-identical.
//
// summary.csv, one row per (method, round):
//   method,round,n_seeds,test_accuracy_mean,test_accuracy_std,
//   train_loss_mean,train_loss_std,epsilon_hat_mean,epsilon_hat_std
// std is the sample standard deviation (n - 1 denominator, 0 when n = 1).
// n_seeds counts the seeds that reached that round.
//
// Reals are printed with %.17g so values round-trip exactly.

#ifndef DPFL_BENCH_METRICS_HPP_
#define DPFL_BENCH_METRICS_HPP_

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dpfl/common/error.hpp"
#include "dpfl/orchestrator/orchestrator.hpp"

namespace dpfl::bench {

inline constexpr const char* kMetricsHeader =
    "method,seed,round,train_loss,test_accuracy,epsilon_hat,delta,batch_sizes,empty_batches,"
    "wall_ms";
inline constexpr const char* kSummaryHeader =
    "method,round,n_seeds,test_accuracy_mean,test_accuracy_std,train_loss_mean,train_loss_std,"
    "epsilon_hat_mean,epsilon_hat_std";

struct MetricsRecord {
  std::string method;
  uint64_t seed = 0;
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  std::optional<double> epsilon_hat;
  std::optional<double> delta;
  std::vector<size_t> batch_sizes;
  int empty_batches = 0;
  std::optional<double> wall_ms;
};

struct SummaryRow {
  std::string method;
  int round = 0;
  size_t n_seeds = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double loss_mean = 0.0;
  double loss_std = 0.0;
  std::optional<double> epsilon_mean;
  std::optional<double> epsilon_std;
};

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<MetricsRecord> to_records(const RunResult& run, bool keep_wall_clock) {
  std::vector<MetricsRecord> out;
  for (const auto& r : run.rounds) {
    MetricsRecord m;
    m.method = method_name(run.method);
    m.seed = run.seed;
    m.round = r.round;
    m.train_loss = r.train_loss;
    m.test_accuracy = r.test_accuracy;
    m.epsilon_hat = r.epsilon_hat;
    if (r.epsilon_hat) m.delta = run.delta;
    m.batch_sizes = r.batch_sizes;
    m.empty_batches = r.empty_batches;
    if (keep_wall_clock) m.wall_ms = r.wall_ms;
    out.push_back(std::move(m));
  }
  return out;
}

inline std::string format_record(const MetricsRecord& r) {
  std::string s = r.method + "," + std::to_string(r.seed) + "," + std::to_string(r.round) + "," +
                  format_real(r.train_loss) + "," + format_real(r.test_accuracy) + ",";
  if (r.epsilon_hat) s += format_real(*r.epsilon_hat);
  s += ",";
  if (r.delta) s += format_real(*r.delta);
  s += ",";
  for (size_t i = 0; i < r.batch_sizes.size(); ++i) {
    if (i) s += ";";
    s += std::to_string(r.batch_sizes[i]);
  }
  s += "," + std::to_string(r.empty_batches) + ",";
  if (r.wall_ms) s += format_real(*r.wall_ms);
  return s;
}

inline std::string metrics_csv(const std::vector<MetricsRecord>& records) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : records) out += format_record(r) + "\n";
  return out;
}

namespace internal {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_real(const std::string& s, const std::string& where) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(where + ": bad number '" + s + "'");
  }
}

inline std::optional<double> parse_optional(const std::string& s, const std::string& where) {
  if (s.empty()) return std::nullopt;
  return parse_real(s, where);
}

}  // namespace internal

inline std::vector<MetricsRecord> parse_metrics_csv(std::istream& in,
                                                    const std::string& source = "<metrics>") {
  std::string line;
  if (!std::getline(in, line) || internal::split_fields(line) !=
                                     internal::split_fields(kMetricsHeader)) {
    throw InvalidArgument(source + ": missing or unexpected metrics header");
  }
  std::vector<MetricsRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = internal::split_fields(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (f.size() != 10) throw InvalidArgument(where + ": expected 10 fields");
    MetricsRecord r;
    r.method = f[0];
    r.seed = static_cast<uint64_t>(internal::parse_real(f[1], where));
    r.round = static_cast<int>(internal::parse_real(f[2], where));
    r.train_loss = internal::parse_real(f[3], where);
    r.test_accuracy = internal::parse_real(f[4], where);
    r.epsilon_hat = internal::parse_optional(f[5], where);
    r.delta = internal::parse_optional(f[6], where);
    std::stringstream bs(f[7]);
    std::string item;
    while (std::getline(bs, item, ';')) {
      if (!item.empty()) r.batch_sizes.push_back(static_cast<size_t>(internal::parse_real(item, where)));
    }
    r.empty_batches = static_cast<int>(internal::parse_real(f[8], where));
    r.wall_ms = internal::parse_optional(f[9], where);
    out.push_back(std::move(r));
  }
  return out;
}

inline double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Records of one method, any seed order. Rows come out by round.
inline std::vector<SummaryRow> summarize(const std::vector<MetricsRecord>& records) {
  struct Acc {
    std::vector<double> acc, loss, eps;
  };
  std::map<std::pair<std::string, int>, Acc> groups;
  for (const auto& r : records) {
    auto& g = groups[{r.method, r.round}];
    g.acc.push_back(r.test_accuracy);
    g.loss.push_back(r.train_loss);
    if (r.epsilon_hat) g.eps.push_back(*r.epsilon_hat);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, g] : groups) {
    SummaryRow s;
    s.method = key.first;
    s.round = key.second;
    s.n_seeds = g.acc.size();
    s.accuracy_mean = sample_mean(g.acc);
    s.accuracy_std = sample_std(g.acc);
    s.loss_mean = sample_mean(g.loss);
    s.loss_std = sample_std(g.loss);
    if (!g.eps.empty()) {
      s.epsilon_mean = sample_mean(g.eps);
      s.epsilon_std = sample_std(g.eps);
    }
    out.push_back(s);
  }
  return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& s : rows) {
    out += s.method + "," + std::to_string(s.round) + "," + std::to_string(s.n_seeds) + "," +
           format_real(s.accuracy_mean) + "," + format_real(s.accuracy_std) + "," +
           format_real(s.loss_mean) + "," + format_real(s.loss_std) + ",";
    if (s.epsilon_mean) out += format_real(*s.epsilon_mean);
    out += ",";
    if (s.epsilon_std) out += format_real(*s.epsilon_std);
    out += "\n";
  }
  return out;
}

// Writes to a sibling temporary file, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kInvalidArgument, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::filesystem::path metrics_path(const std::filesystem::path& dir,
                                          const std::string& method) {
  return dir / ("metrics_" + method + ".csv");
}

// All metrics_*.csv files in `dir`, keyed by method name.
inline std::map<std::string, std::vector<MetricsRecord>> read_metrics_dir(
    const std::filesystem::path& dir) {
  std::map<std::string, std::vector<MetricsRecord>> out;
  if (!std::filesystem::is_directory(dir)) {
    throw InvalidArgument("metrics directory not found: " + dir.string());
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("metrics_", 0) != 0 || entry.path().extension() != ".csv") continue;
    std::ifstream in(entry.path());
    auto records = parse_metrics_csv(in, entry.path().string());
    if (records.empty()) continue;
    out[records.front().method] = std::move(records);
  }
  return out;
}

}  // namespace dpfl::bench

#endif  // DPFL_BENCH_METRICS_HPP_
