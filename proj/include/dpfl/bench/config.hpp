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

// Experiment configuration files.
//
// Format: "[section]" headers and "key = value" lines; '#' or ';' start a
// comment; blank lines are ignored. Lists are comma separated. Sections:
//   [experiment]  methods, seeds, out, record_wall_clock, secure, transport
//   [data]        source, csv_path, hospitals, samples_per_hospital,
//                 test_samples, test_fraction, features, classes, separation,
//                 model, hidden, data_seed
//   [defaults]    training keys shared by every method
//   [C] [CDP] [F] [FPDP] [DOPAMINE]   per-method overrides of the same keys
// Training keys: q, sigma, clip_norm, eta, beta, rounds, epsilon, delta,
// calibration (multiplier | per-round), batch_size, local_epochs,
// participation.
// Unknown sections or keys, duplicates and malformed values are errors that
// name the file, line and key.

#ifndef DPFL_BENCH_CONFIG_HPP_
#define DPFL_BENCH_CONFIG_HPP_

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dpfl/common/error.hpp"
#include "dpfl/orchestrator/aggregator.hpp"
#include "dpfl/orchestrator/orchestrator.hpp"

namespace dpfl::bench {

class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& source, int line, const std::string& what)
      : InvalidArgument(source + (line > 0 ? ":" + std::to_string(line) : "") + ": " + what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace internal {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  size_t begin = 0;
  while (begin <= s.size()) {
    const size_t comma = s.find(',', begin);
    const size_t end = comma == std::string_view::npos ? s.size() : comma;
    const auto item = trim(s.substr(begin, end - begin));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    begin = comma + 1;
  }
  return out;
}

}  // namespace internal

struct IniValue {
  std::string text;
  int line = 0;
};

// Sections of key/value pairs with the line each value came from.
class IniDocument {
 public:
  static IniDocument parse(std::istream& in, std::string source = "<config>") {
    IniDocument doc;
    doc.source_ = std::move(source);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string_view line = raw;
      const auto comment = line.find_first_of("#;");
      if (comment != std::string_view::npos) line = line.substr(0, comment);
      line = internal::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) {
          throw ConfigError(doc.source_, line_no, "malformed section header");
        }
        section = std::string(internal::trim(line.substr(1, line.size() - 2)));
        if (doc.sections_.count(section)) {
          throw ConfigError(doc.source_, line_no, "duplicate section [" + section + "]");
        }
        doc.sections_[section];
        doc.section_lines_[section] = line_no;
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(doc.source_, line_no, "expected 'key = value'");
      }
      if (section.empty()) {
        throw ConfigError(doc.source_, line_no, "key outside of any section");
      }
      const std::string key(internal::trim(line.substr(0, eq)));
      const std::string value(internal::trim(line.substr(eq + 1)));
      if (key.empty()) throw ConfigError(doc.source_, line_no, "empty key");
      auto& sec = doc.sections_[section];
      if (sec.count(key)) {
        throw ConfigError(doc.source_, line_no, "duplicate key '" + key + "' in [" + section + "]");
      }
      sec[key] = {value, line_no};
    }
    return doc;
  }

  static IniDocument parse_string(const std::string& text, std::string source = "<config>") {
    std::istringstream in(text);
    return parse(in, std::move(source));
  }

  bool has_section(const std::string& s) const { return sections_.count(s) > 0; }
  const std::map<std::string, IniValue>& section(const std::string& s) const {
    static const std::map<std::string, IniValue> kEmpty;
    auto it = sections_.find(s);
    return it == sections_.end() ? kEmpty : it->second;
  }
  std::vector<std::string> section_names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : sections_) out.push_back(name);
    return out;
  }
  int section_line(const std::string& s) const {
    auto it = section_lines_.find(s);
    return it == section_lines_.end() ? 0 : it->second;
  }
  const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::map<std::string, std::map<std::string, IniValue>> sections_;
  std::map<std::string, int> section_lines_;
};

struct DataSpec {
  std::string source = "synthetic";  // synthetic | csv
  std::string csv_path;
  size_t hospitals = 10;
  size_t samples_per_hospital = 293;
  size_t test_samples = 1000;    // synthetic
  double test_fraction = 0.2;    // csv
  size_t features = 20;
  size_t classes = 2;
  double separation = 4.0;
  std::string model = "logistic";  // logistic | mlp
  size_t hidden = 16;
  // Unset: the data are regenerated from each run seed.
  std::optional<uint64_t> data_seed;
};

struct ExperimentConfig {
  std::vector<Method> methods;
  std::vector<uint64_t> seeds{1};
  std::string out_dir = "results";
  bool record_wall_clock = false;
  AggregationMode secure = AggregationMode::kSecure;
  TransportKind transport = TransportKind::kLoopback;
  DataSpec data;
  std::map<Method, RunConfig> runs;

  // Settings of `m` with the experiment-wide fields applied.
  RunConfig run_config(Method m) const {
    auto it = runs.find(m);
    RunConfig cfg = it == runs.end() ? RunConfig{} : it->second;
    cfg.method = m;
    cfg.seeds = seeds;
    cfg.aggregation = secure;
    cfg.transport = transport;
    cfg.dp.num_hospitals = static_cast<int>(data.hospitals);
    return cfg;
  }
};

namespace internal {

class FieldReader {
 public:
  FieldReader(const IniDocument& doc, std::string section)
      : doc_(doc), section_(std::move(section)) {}

  const IniValue* find(const std::string& key) const {
    const auto& sec = doc_.section(section_);
    auto it = sec.find(key);
    return it == sec.end() ? nullptr : &it->second;
  }

  [[noreturn]] void fail(const IniValue& v, const std::string& key,
                         const std::string& what) const {
    throw ConfigError(doc_.source(), v.line, "[" + section_ + "] " + key + ": " + what);
  }

  template <class T>
  void number(const std::string& key, T& out) const {
    const IniValue* v = find(key);
    if (!v) return;
    out = parse_number<T>(*v, key);
  }

  template <class T>
  T parse_number(const IniValue& v, const std::string& key) const {
    T value{};
    const char* first = v.text.data();
    const char* last = first + v.text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || v.text.empty()) {
      fail(v, key, "expected a number, got '" + v.text + "'");
    }
    return value;
  }

  void text(const std::string& key, std::string& out) const {
    if (const IniValue* v = find(key)) out = v->text;
  }

  void boolean(const std::string& key, bool& out) const {
    const IniValue* v = find(key);
    if (!v) return;
    if (v->text == "true" || v->text == "1" || v->text == "yes") {
      out = true;
    } else if (v->text == "false" || v->text == "0" || v->text == "no") {
      out = false;
    } else {
      fail(*v, key, "expected true or false, got '" + v->text + "'");
    }
  }

  void check_known(const std::set<std::string>& allowed) const {
    for (const auto& [key, v] : doc_.section(section_)) {
      if (!allowed.count(key)) fail(v, key, "unknown key");
    }
  }

 private:
  const IniDocument& doc_;
  std::string section_;
};

inline const std::set<std::string>& training_keys() {
  static const std::set<std::string> keys = {
      "q",         "sigma",      "clip_norm",    "eta",          "beta",
      "rounds",    "epsilon",    "delta",        "calibration",  "batch_size",
      "local_epochs", "participation"};
  return keys;
}

inline void apply_training(const FieldReader& r, RunConfig& cfg) {
  r.check_known(training_keys());
  r.number("q", cfg.dp.q);
  r.number("sigma", cfg.dp.sigma);
  r.number("clip_norm", cfg.dp.clip_norm);
  r.number("eta", cfg.dp.eta);
  r.number("beta", cfg.dp.beta);
  r.number("rounds", cfg.dp.max_rounds);
  r.number("epsilon", cfg.dp.epsilon);
  r.number("delta", cfg.dp.delta);
  r.number("batch_size", cfg.batch_size);
  r.number("local_epochs", cfg.fedavg_local_epochs);
  r.number("participation", cfg.participation_fraction);
  if (const IniValue* v = r.find("calibration")) {
    if (v->text == "multiplier") {
      cfg.dp.calibration = CalibrationMode::kMultiplier;
    } else if (v->text == "per-round") {
      cfg.dp.calibration = CalibrationMode::kPerRound;
    } else {
      r.fail(*v, "calibration", "expected multiplier or per-round");
    }
  }
}

}  // namespace internal

// Builds and validates an ExperimentConfig. Errors carry the line of the
// offending value (or of the section for cross-field problems).
inline ExperimentConfig parse_experiment_config(const IniDocument& doc) {
  using internal::FieldReader;
  static const std::set<std::string> kSections = {"experiment", "data", "defaults", "C",
                                                  "CDP",        "F",    "FPDP",     "DOPAMINE"};
  for (const auto& name : doc.section_names()) {
    if (!kSections.count(name)) {
      throw ConfigError(doc.source(), doc.section_line(name), "unknown section [" + name + "]");
    }
  }
  ExperimentConfig cfg;

  FieldReader ex(doc, "experiment");
  ex.check_known({"methods", "seeds", "out", "record_wall_clock", "secure", "transport"});
  if (const auto* v = ex.find("methods")) {
    for (const auto& name : internal::split_list(v->text)) {
      try {
        cfg.methods.push_back(parse_method(name));
      } catch (const InvalidArgument& e) {
        ex.fail(*v, "methods", e.detail());
      }
    }
  } else {
    cfg.methods.assign(std::begin(kAllMethods), std::end(kAllMethods));
  }
  if (cfg.methods.empty()) throw ConfigError(doc.source(), 0, "[experiment] methods is empty");
  if (const auto* v = ex.find("seeds")) {
    cfg.seeds.clear();
    for (const auto& s : internal::split_list(v->text)) {
      cfg.seeds.push_back(ex.parse_number<uint64_t>({s, v->line}, "seeds"));
    }
    if (cfg.seeds.empty()) ex.fail(*v, "seeds", "empty list");
  }
  ex.text("out", cfg.out_dir);
  ex.boolean("record_wall_clock", cfg.record_wall_clock);
  if (const auto* v = ex.find("secure")) {
    try {
      cfg.secure = parse_aggregation_mode(v->text);
    } catch (const InvalidArgument& e) {
      ex.fail(*v, "secure", e.detail());
    }
  }
  if (const auto* v = ex.find("transport")) {
    try {
      cfg.transport = parse_transport_kind(v->text);
    } catch (const InvalidArgument& e) {
      ex.fail(*v, "transport", e.detail());
    }
  }

  FieldReader da(doc, "data");
  da.check_known({"source", "csv_path", "hospitals", "samples_per_hospital", "test_samples",
                  "test_fraction", "features", "classes", "separation", "model", "hidden",
                  "data_seed"});
  auto& d = cfg.data;
  da.text("source", d.source);
  da.text("csv_path", d.csv_path);
  da.number("hospitals", d.hospitals);
  da.number("samples_per_hospital", d.samples_per_hospital);
  da.number("test_samples", d.test_samples);
  da.number("test_fraction", d.test_fraction);
  da.number("features", d.features);
  da.number("classes", d.classes);
  da.number("separation", d.separation);
  da.text("model", d.model);
  da.number("hidden", d.hidden);
  if (const auto* v = da.find("data_seed")) d.data_seed = da.parse_number<uint64_t>(*v, "data_seed");
  const int data_line = doc.section_line("data");
  auto data_check = [&](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(doc.source(), data_line, "[data] " + what);
  };
  data_check(d.source == "synthetic" || d.source == "csv", "source must be synthetic or csv");
  data_check(d.source != "csv" || !d.csv_path.empty(), "csv source needs csv_path");
  data_check(d.hospitals >= 1 && d.hospitals <= 1000, "hospitals must be in [1, 1000]");
  data_check(d.samples_per_hospital >= 1, "samples_per_hospital must be >= 1");
  data_check(d.test_samples >= 1, "test_samples must be >= 1");
  data_check(d.test_fraction > 0.0 && d.test_fraction < 1.0, "test_fraction must be in (0, 1)");
  data_check(d.features >= 1 && d.classes >= 2, "need features >= 1 and classes >= 2");
  data_check(d.model == "logistic" || d.model == "mlp", "model must be logistic or mlp");
  data_check(d.hidden >= 1, "hidden must be >= 1");

  RunConfig defaults;
  internal::apply_training(FieldReader(doc, "defaults"), defaults);
  for (Method m : kAllMethods) {
    RunConfig rc = defaults;
    internal::apply_training(FieldReader(doc, method_name(m)), rc);
    rc.method = m;
    cfg.runs[m] = rc;
  }
  for (Method m : cfg.methods) {
    const std::string name = method_name(m);
    const int line = doc.has_section(name) ? doc.section_line(name) : doc.section_line("defaults");
    try {
      cfg.run_config(m).validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(doc.source(), line, "[" + name + "] " + e.detail());
    }
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, "cannot open config file");
  return parse_experiment_config(IniDocument::parse(in, path));
}

}  // namespace dpfl::bench

#endif  // DPFL_BENCH_CONFIG_HPP_
