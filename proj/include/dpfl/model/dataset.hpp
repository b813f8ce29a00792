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

#ifndef DPFL_MODEL_DATASET_HPP_
#define DPFL_MODEL_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpfl/common/error.hpp"
#include "dpfl/common/random.hpp"

namespace dpfl {

struct LabeledSample {
  std::vector<double> features;
  int label = 0;
};

// Immutable collection of samples with a fixed feature width and class count.
// Copies share the underlying storage.
class Dataset {
 public:
  Dataset() = default;

  Dataset(std::vector<LabeledSample> samples, size_t num_classes,
          std::string id = "global")
      : samples_(std::make_shared<const std::vector<LabeledSample>>(
            std::move(samples))),
        num_classes_(num_classes),
        id_(std::move(id)) {
    require(num_classes_ >= 2, "dataset needs at least two classes");
    if (!samples_->empty()) num_features_ = samples_->front().features.size();
    for (const auto& s : *samples_) {
      require(s.features.size() == num_features_,
              "inconsistent feature length in dataset " + id_);
      require(s.label >= 0 && static_cast<size_t>(s.label) < num_classes_,
              "label out of range in dataset " + id_);
    }
  }

  const std::vector<LabeledSample>& samples() const {
    static const std::vector<LabeledSample> kEmpty;
    return samples_ ? *samples_ : kEmpty;
  }
  const LabeledSample& operator[](size_t i) const { return samples()[i]; }
  size_t size() const { return samples().size(); }
  bool empty() const { return size() == 0; }
  size_t num_features() const { return num_features_; }
  size_t num_classes() const { return num_classes_; }
  const std::string& id() const { return id_; }

 private:
  std::shared_ptr<const std::vector<LabeledSample>> samples_;
  size_t num_features_ = 0;
  size_t num_classes_ = 2;
  std::string id_ = "global";
};

// Gaussian class blobs. Class c is centred at (separation / 2) * u_c, where
// the u_c are seeded random unit vectors (u_1 = -u_0 in the binary case, so
// the two centres are exactly `separation` apart). Labels are balanced
// round-robin and the sample order is shuffled.
inline Dataset synth_dataset(size_t num_samples, size_t num_features,
                             size_t num_classes, uint64_t seed,
                             double separation = 4.0) {
  if (num_samples == 0 || num_features == 0 || num_classes == 0) {
    throw InvalidArgument("synth_dataset: counts must be positive");
  }
  require(num_classes >= 2, "synth_dataset: need at least two classes");
  require(std::isfinite(separation) && separation >= 0.0,
          "synth_dataset: separation must be finite and non-negative");

  NoiseSource rng(seed, /*stream=*/0x5eed);
  std::vector<std::vector<double>> centres(num_classes,
                                           std::vector<double>(num_features));
  for (size_t c = 0; c < num_classes; ++c) {
    if (num_classes == 2 && c == 1) {
      for (size_t j = 0; j < num_features; ++j) centres[1][j] = -centres[0][j];
      break;
    }
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& v : centres[c]) {
        v = rng.gaussian();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (auto& v : centres[c]) v *= 0.5 * separation / norm;
  }

  std::vector<LabeledSample> samples(num_samples);
  for (size_t i = 0; i < num_samples; ++i) {
    const size_t label = i % num_classes;
    samples[i].label = static_cast<int>(label);
    samples[i].features.resize(num_features);
    for (size_t j = 0; j < num_features; ++j) {
      samples[i].features[j] = centres[label][j] + rng.gaussian();
    }
  }
  std::shuffle(samples.begin(), samples.end(), rng);
  return Dataset(std::move(samples), num_classes, "global");
}

// Splits into `num_shards` contiguous shards of equal size (the first
// size % num_shards shards get one extra sample).
inline std::vector<Dataset> partition_iid(const Dataset& data,
                                          size_t num_shards) {
  require(num_shards >= 1, "partition_iid: need at least one shard");
  require(data.size() >= num_shards, "partition_iid: fewer samples than shards");
  std::vector<Dataset> shards;
  shards.reserve(num_shards);
  const size_t base = data.size() / num_shards;
  const size_t extra = data.size() % num_shards;
  size_t begin = 0;
  for (size_t k = 0; k < num_shards; ++k) {
    const size_t len = base + (k < extra ? 1 : 0);
    std::vector<LabeledSample> part(data.samples().begin() + begin,
                                    data.samples().begin() + begin + len);
    shards.emplace_back(std::move(part), data.num_classes(),
                        "hospital-" + std::to_string(k + 1));
    begin += len;
  }
  return shards;
}

// First `train_size` samples become the training set; the rest the held-out
// set.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& data,
                                                    size_t train_size) {
  require(train_size < data.size(), "split_train_test: nothing left to test");
  std::vector<LabeledSample> train(data.samples().begin(),
                                   data.samples().begin() + train_size);
  std::vector<LabeledSample> test(data.samples().begin() + train_size,
                                  data.samples().end());
  return {Dataset(std::move(train), data.num_classes(), "train"),
          Dataset(std::move(test), data.num_classes(), "test")};
}

inline Dataset concatenate(const std::vector<Dataset>& parts,
                           std::string id = "union") {
  require(!parts.empty(), "concatenate: no parts");
  std::vector<LabeledSample> all;
  for (const auto& p : parts) {
    all.insert(all.end(), p.samples().begin(), p.samples().end());
  }
  return Dataset(std::move(all), parts.front().num_classes(), std::move(id));
}

// CSV ingestion: one header row, then one sample per line; the last column is
// the integer label and the rest are features. `num_classes` of 0 means
// "max label + 1".
inline Dataset load_csv_dataset(std::istream& in, size_t num_classes = 0,
                                std::string id = "global") {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("csv: missing header row");
  std::vector<LabeledSample> samples;
  size_t line_no = 1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) {
      throw InvalidArgument("csv line " + std::to_string(line_no) +
                            ": need at least one feature and a label");
    }
    LabeledSample s;
    try {
      for (size_t j = 0; j + 1 < cells.size(); ++j) {
        s.features.push_back(std::stod(cells[j]));
      }
      size_t used = 0;
      s.label = std::stoi(cells.back(), &used);
      if (used != cells.back().size()) throw std::invalid_argument("label");
    } catch (const std::exception&) {
      throw InvalidArgument("csv line " + std::to_string(line_no) +
                            ": malformed number");
    }
    if (s.label < 0) {
      throw InvalidArgument("csv line " + std::to_string(line_no) +
                            ": negative label");
    }
    max_label = std::max(max_label, s.label);
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw InvalidArgument("csv: no samples");
  if (num_classes == 0) {
    num_classes = std::max<size_t>(2, static_cast<size_t>(max_label) + 1);
  }
  return Dataset(std::move(samples), num_classes, std::move(id));
}

inline Dataset load_csv_dataset(const std::string& path, size_t num_classes = 0) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open dataset " + path);
  return load_csv_dataset(in, num_classes, "global");
}

}  // namespace dpfl

#endif  // DPFL_MODEL_DATASET_HPP_
