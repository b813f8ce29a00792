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

// Runs every (method, seed) pair of an ExperimentConfig and writes the
// metrics files described in metrics.hpp.

#ifndef DPFL_BENCH_EXPERIMENT_HPP_
#define DPFL_BENCH_EXPERIMENT_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dpfl/bench/config.hpp"
#include "dpfl/bench/metrics.hpp"
#include "dpfl/common/random.hpp"
#include "dpfl/model/dataset.hpp"
#include "dpfl/model/model.hpp"
#include "dpfl/orchestrator/orchestrator.hpp"

namespace dpfl::bench {

inline constexpr uint64_t kCsvShuffleStream = 0xda7a;

inline Federation build_federation(const DataSpec& spec, uint64_t seed) {
  const uint64_t data_seed = spec.data_seed.value_or(seed);
  Dataset train, test;
  if (spec.source == "csv") {
    const Dataset all = load_csv_dataset(spec.csv_path, spec.classes);
    std::vector<LabeledSample> samples = all.samples();
    NoiseSource rng(data_seed, kCsvShuffleStream);
    for (size_t i = samples.size(); i > 1; --i) {
      std::swap(samples[i - 1], samples[rng.uniform_below(i)]);
    }
    const auto n_test = static_cast<size_t>(
        std::lround(spec.test_fraction * static_cast<double>(samples.size())));
    require(n_test >= 1 && n_test < samples.size(), "csv data too small to split");
    const size_t n_train = samples.size() - n_test;
    std::tie(train, test) =
        split_train_test(Dataset(std::move(samples), all.num_classes()), n_train);
  } else {
    const size_t n_train = spec.hospitals * spec.samples_per_hospital;
    const Dataset all = synth_dataset(n_train + spec.test_samples, spec.features, spec.classes,
                                      data_seed, spec.separation);
    std::tie(train, test) = split_train_test(all, n_train);
  }
  Federation fed;
  fed.shards = partition_iid(train, spec.hospitals);
  fed.test = test;
  if (spec.model == "mlp") {
    NoiseSource init(seed, kInitStream);
    fed.initial_model = make_mlp_model(train.num_features(), spec.hidden, train.num_classes(), init);
  } else {
    fed.initial_model = make_logistic_model(train.num_features(), train.num_classes());
  }
  return fed;
}

struct ExperimentOutcome {
  std::map<Method, std::vector<RunResult>> runs;
  std::vector<SummaryRow> summary;
};

using ProgressFn = std::function<void(const std::string&)>;

// Sequential over methods and seeds. Each method's CSV is written when the
// method finishes; if a run throws, the rows gathered so far for that method
// are flushed together with the summary before the exception propagates.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, ProgressFn progress = {}) {
  const std::filesystem::path out_dir = cfg.out_dir;
  std::filesystem::create_directories(out_dir);
  ExperimentOutcome outcome;
  std::map<uint64_t, Federation> federations;
  std::vector<MetricsRecord> all_records;

  auto flush_summary = [&] {
    outcome.summary = summarize(all_records);
    write_file_atomic(out_dir / "summary.csv", summary_csv(outcome.summary));
  };

  for (Method m : cfg.methods) {
    const RunConfig rc = cfg.run_config(m);
    std::vector<MetricsRecord> records;
    for (uint64_t seed : cfg.seeds) {
      auto it = federations.find(seed);
      if (it == federations.end()) {
        it = federations.emplace(seed, build_federation(cfg.data, seed)).first;
      }
      if (progress) progress("running " + method_name(m) + " seed " + std::to_string(seed));
      RunResult partial;
      partial.method = m;
      partial.seed = seed;
      partial.delta = rc.dp.delta;
      try {
        RunResult r = run_method(rc, it->second, seed,
                                 [&](const RoundRecord& rec) { partial.rounds.push_back(rec); });
        auto rows = to_records(r, cfg.record_wall_clock);
        records.insert(records.end(), rows.begin(), rows.end());
        outcome.runs[m].push_back(std::move(r));
      } catch (...) {
        auto rows = to_records(partial, cfg.record_wall_clock);
        records.insert(records.end(), rows.begin(), rows.end());
        all_records.insert(all_records.end(), records.begin(), records.end());
        write_file_atomic(metrics_path(out_dir, method_name(m)), metrics_csv(records));
        flush_summary();
        throw;
      }
    }
    write_file_atomic(metrics_path(out_dir, method_name(m)), metrics_csv(records));
    all_records.insert(all_records.end(), records.begin(), records.end());
  }
  flush_summary();
  return outcome;
}

}  // namespace dpfl::bench

#endif  // DPFL_BENCH_EXPERIMENT_HPP_
