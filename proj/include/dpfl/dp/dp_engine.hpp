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

#ifndef DPFL_DP_DP_ENGINE_HPP_
#define DPFL_DP_DP_ENGINE_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpfl/common/error.hpp"
#include "dpfl/common/random.hpp"
#include "dpfl/model/model.hpp"

namespace dpfl {

// How per-hospital noise is calibrated.
//   kMultiplier: variance sigma^2 C^2 / K on the clipped-gradient sum, privacy
//                tracked by the moments accountant.
//   kPerRound:   variance from the closed-form per-round Gaussian bound,
//                privacy composed round by round.
enum class CalibrationMode { kMultiplier, kPerRound };

struct DpConfig {
  double q = 0.3;          // Poisson sampling probability
  double sigma = 1.0;      // noise multiplier
  double clip_norm = 1.0;  // C
  double eta = 0.1;        // learning rate
  double beta = 0.9;       // momentum
  int max_rounds = 100;    // T
  double epsilon = 1.0;    // target bound
  double delta = 1e-4;
  int num_hospitals = 10;  // K
  CalibrationMode calibration = CalibrationMode::kMultiplier;

  // Throws InvalidArgument naming the first bad field. K = 1 is accepted so
  // that the federated path can be reduced to centralized training.
  void validate() const {
    require(q > 0.0 && q <= 1.0, "dp.q must be in (0, 1]");
    require(sigma >= 0.0 && std::isfinite(sigma), "dp.sigma must be >= 0");
    require(clip_norm > 0.0, "dp.clip_norm must be > 0");
    require(eta > 0.0, "dp.eta must be > 0");
    require(beta >= 0.0 && beta < 1.0, "dp.beta must be in [0, 1)");
    require(max_rounds >= 1, "dp.max_rounds must be >= 1");
    require(epsilon > 0.0, "dp.epsilon must be > 0");
    require(delta > 0.0 && delta < 1.0, "dp.delta must be in (0, 1)");
    require(num_hospitals >= 1, "dp.num_hospitals must be >= 1");
  }

  // delta should be well below 1/|D|; returns false when it is not.
  bool delta_recommended_for(size_t dataset_size) const {
    return dataset_size == 0 || delta < 1.0 / static_cast<double>(dataset_size);
  }
};

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// g / max(1, ||g|| / C).
inline PerSampleGradient clip_gradient(const PerSampleGradient& g,
                                       double clip_norm) {
  require(clip_norm > 0.0, "clip_gradient: C must be > 0");
  for (double v : g.values) {
    require(std::isfinite(v), "clip_gradient: non-finite gradient coordinate");
  }
  const double norm = l2_norm(g.values);
  const double scale = std::max(1.0, norm / clip_norm);
  PerSampleGradient out{g.values};
  if (scale > 1.0) {
    for (double& v : out.values) v /= scale;
  }
  return out;
}

// (sum_i clipped_i + z) / m with z ~ N(0, sigma^2 C^2 / K) i.i.d. per
// coordinate and m the realized batch size. Throws EmptyBatch for m = 0; the
// caller decides the policy.
inline std::vector<double> noisy_average(
    std::span<const PerSampleGradient> clipped, double sigma, double clip_norm,
    int num_hospitals, NoiseSource& rng) {
  if (clipped.empty()) throw EmptyBatch("noisy_average: no samples in batch");
  require(sigma >= 0.0 && clip_norm > 0.0 && num_hospitals >= 1,
          "noisy_average: bad noise parameters");
  const size_t dim = clipped.front().values.size();
  std::vector<double> sum(dim, 0.0);
  for (const auto& g : clipped) {
    require(g.values.size() == dim, "noisy_average: gradient length mismatch");
    require(l2_norm(g.values) <= clip_norm + 1e-9,
            "noisy_average: gradient exceeds clipping norm");
    for (size_t j = 0; j < dim; ++j) sum[j] += g.values[j];
  }
  const double stddev =
      sigma * clip_norm / std::sqrt(static_cast<double>(num_hospitals));
  if (stddev > 0.0) {
    for (double& v : sum) v += rng.gaussian(stddev);
  }
  const double m = static_cast<double>(clipped.size());
  for (double& v : sum) v /= m;
  return sum;
}

// Per-round calibration: the clipped-gradient mean plus Gaussian noise whose
// variance on the mean is `variance` (e.g. from per_hospital_noise_variance).
inline std::vector<double> noisy_average_with_variance(
    std::span<const PerSampleGradient> clipped, double variance,
    NoiseSource& rng) {
  if (clipped.empty()) throw EmptyBatch("noisy_average: no samples in batch");
  require(variance >= 0.0 && std::isfinite(variance),
          "noisy_average: variance must be finite and >= 0");
  const size_t dim = clipped.front().values.size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& g : clipped) {
    require(g.values.size() == dim, "noisy_average: gradient length mismatch");
    for (size_t j = 0; j < dim; ++j) mean[j] += g.values[j];
  }
  const double m = static_cast<double>(clipped.size());
  const double stddev = std::sqrt(variance);
  for (double& v : mean) {
    v /= m;
    if (stddev > 0.0) v += rng.gaussian(stddev);
  }
  return mean;
}

// Noise-only contribution used when Poisson sampling returns an empty batch:
// the hospital's noise share divided by a nominal batch size of one.
inline std::vector<double> noise_only_average(size_t dim, double sigma,
                                              double clip_norm,
                                              int num_hospitals,
                                              NoiseSource& rng) {
  std::vector<double> out(dim, 0.0);
  const double stddev =
      sigma * clip_norm / std::sqrt(static_cast<double>(num_hospitals));
  if (stddev > 0.0) {
    for (double& v : out) v = rng.gaussian(stddev);
  }
  return out;
}

struct MomentumState {
  std::vector<double> buffer;
  int round = 0;

  static MomentumState zeros(size_t dim) { return {std::vector<double>(dim, 0.0), 0}; }
};

// buffer <- noisy_grad + beta * buffer.
inline MomentumState momentum_step(const MomentumState& state,
                                   std::span<const double> noisy_grad,
                                   double beta) {
  require(state.buffer.size() == noisy_grad.size(),
          "momentum_step: length mismatch");
  MomentumState next{std::vector<double>(noisy_grad.size()), state.round + 1};
  for (size_t j = 0; j < noisy_grad.size(); ++j) {
    next.buffer[j] = noisy_grad[j] + beta * state.buffer[j];
  }
  return next;
}

// w - eta * buffer.
inline ModelParams sgd_update(const ModelParams& model,
                              const MomentumState& momentum, double eta) {
  require(model.values.size() == momentum.buffer.size(),
          "sgd_update: length mismatch");
  require(eta >= 0.0, "sgd_update: eta must be non-negative");
  ModelParams out = model;
  for (size_t j = 0; j < out.values.size(); ++j) {
    out.values[j] -= eta * momentum.buffer[j];
  }
  return out;
}

// sigma^2 = 2 ln(1.25/delta) (l2_sensitivity)^2 / epsilon^2.
inline double gaussian_mechanism_variance(double epsilon, double delta,
                                          double l2_sensitivity) {
  require(epsilon > 0.0 && l2_sensitivity > 0.0,
          "gaussian_mechanism_variance: inputs must be positive");
  require(delta > 0.0 && delta < 1.0,
          "gaussian_mechanism_variance: delta must be in (0, 1)");
  return 2.0 * std::log(1.25 / delta) * l2_sensitivity * l2_sensitivity /
         (epsilon * epsilon);
}

// Per-hospital variance that makes the securely averaged round
// (epsilon, delta)-DP against the server:
//   2 ln(1.25/delta) C^2 / (epsilon^2 |batch|^2 K).
inline double per_hospital_noise_variance(double epsilon, double delta,
                                    double clip_norm, size_t batch_size,
                                    int num_hospitals) {
  require(delta < 1.25, "per_hospital_noise_variance: delta >= 1.25 gives ln <= 0");
  require(epsilon > 0.0 && delta > 0.0 && clip_norm > 0.0 && batch_size > 0 &&
              num_hospitals > 0,
          "per_hospital_noise_variance: inputs must be positive");
  const double m = static_cast<double>(batch_size);
  return 2.0 * std::log(1.25 / delta) * clip_norm * clip_norm /
         (epsilon * epsilon * m * m * num_hospitals);
}

// A hospital knows its own noise share, so against it the guarantee degrades
// to epsilon * sqrt(K / (K - 1)).
inline double hospital_view_epsilon(double epsilon, int num_hospitals) {
  require(num_hospitals >= 2, "hospital_view_epsilon: need K >= 2");
  const double k = num_hospitals;
  return epsilon * std::sqrt(k / (k - 1.0));
}

}  // namespace dpfl

#endif  // DPFL_DP_DP_ENGINE_HPP_
