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
#include <limits>
#include <vector>

#include "dpfl/common/random.hpp"
#include "dpfl/dp/dp_engine.hpp"
#include "oracles.hpp"

namespace dpfl {
namespace {

double sample_variance(const std::vector<double>& xs) {
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double s = 0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return s / static_cast<double>(xs.size() - 1);
}

// 10^5 noise draws from noisy_average on a single zero gradient of width 1000.
std::vector<double> noise_draws(double sigma, double c, int k, uint64_t seed) {
  NoiseSource rng(seed, 0);
  const std::vector<PerSampleGradient> batch = {{std::vector<double>(1000, 0.0)}};
  std::vector<double> out;
  for (int i = 0; i < 100; ++i) {
    const auto v = noisy_average(batch, sigma, c, k, rng);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

TEST(ClipGradientTest, HalvesWhenNormIsTwiceBound) {
  const PerSampleGradient g{{0.0, 4.0, 0.0}};
  const auto out = clip_gradient(g, 2.0);
  EXPECT_EQ(out.values, (std::vector<double>{0.0, 2.0, 0.0}));
  const PerSampleGradient h{{2.0, 2.0, 2.0, 2.0}};
  const auto o2 = clip_gradient(h, 2.0);
  for (double v : o2.values) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_NEAR(l2_norm(o2.values), 2.0, 1e-15);
}

TEST(ClipGradientTest, InsideBallUnchanged) {
  const PerSampleGradient g{{0.6, 0.8}};
  EXPECT_EQ(clip_gradient(g, 2.0).values, g.values);
  const PerSampleGradient z{{0.0, 0.0}};
  EXPECT_EQ(clip_gradient(z, 1.0).values, z.values);
}

TEST(ClipGradientTest, NormBoundAndDirectionOnRandomInputs) {
  NoiseSource rng(4, 4);
  for (int t = 0; t < 500; ++t) {
    PerSampleGradient g{std::vector<double>(7)};
    for (double& v : g.values) v = rng.gaussian(3.0);
    const double c = 0.1 + rng.uniform() * 5;
    const auto out = clip_gradient(g, c);
    EXPECT_LE(l2_norm(out.values), c * (1 + 1e-15));
    const double scale = std::max(1.0, l2_norm(g.values) / c);
    for (size_t j = 0; j < g.values.size(); ++j) {
      EXPECT_NEAR(out.values[j], g.values[j] / scale, 1e-15 * std::abs(g.values[j]) + 1e-300);
    }
  }
}

TEST(ClipGradientTest, RejectsNonFiniteAndBadBound) {
  EXPECT_THROW(clip_gradient({{1.0, std::nan("")}}, 1.0), InvalidArgument);
  EXPECT_THROW(clip_gradient({{std::numeric_limits<double>::infinity()}}, 1.0), InvalidArgument);
  EXPECT_THROW(clip_gradient({{1.0}}, 0.0), InvalidArgument);
}

TEST(NoisyAverageTest, ZeroSigmaIsExactMean) {
  NoiseSource rng(1, 1);
  const std::vector<PerSampleGradient> batch = {{{1.0, 0.0}}, {{0.0, 0.5}}, {{-0.5, 0.5}}};
  const auto v = noisy_average(batch, 0.0, 1.0, 10, rng);
  EXPECT_DOUBLE_EQ(v[0], 0.5 / 3);
  EXPECT_DOUBLE_EQ(v[1], 1.0 / 3);
}

TEST(NoisyAverageTest, EmptyBatchSignalled) {
  NoiseSource rng(1, 1);
  EXPECT_THROW(noisy_average(std::vector<PerSampleGradient>{}, 1.0, 1.0, 1, rng), EmptyBatch);
}

TEST(NoisyAverageTest, RejectsUnclippedInput) {
  NoiseSource rng(1, 1);
  const std::vector<PerSampleGradient> batch = {{{3.0, 4.0}}};
  EXPECT_THROW(noisy_average(batch, 1.0, 1.0, 1, rng), InvalidArgument);
}

TEST(NoisyAverageTest, UnitVarianceForUnitParameters) {
  const auto draws = noise_draws(1.0, 1.0, 1, 17);
  ASSERT_EQ(draws.size(), 100000u);
  EXPECT_NEAR(sample_variance(draws), 1.0, 0.02);
}

TEST(NoisyAverageTest, VarianceScalesInverselyWithK) {
  const double v1 = sample_variance(noise_draws(1.0, 1.0, 1, 18));
  const double v10 = sample_variance(noise_draws(1.0, 1.0, 10, 19));
  EXPECT_NEAR(v10 / v1, 0.1, 0.1 * 0.03);
}

TEST(NoisyAverageTest, DividesNoiseByRealizedBatchSize) {
  NoiseSource rng(20, 0);
  const std::vector<PerSampleGradient> batch(4, PerSampleGradient{std::vector<double>(1000, 0.0)});
  std::vector<double> draws;
  for (int i = 0; i < 100; ++i) {
    const auto v = noisy_average(batch, 2.0, 1.0, 1, rng);
    draws.insert(draws.end(), v.begin(), v.end());
  }
  // sigma^2 C^2 / m^2 = 4 / 16
  EXPECT_NEAR(sample_variance(draws), 0.25, 0.25 * oracle::variance_relative_halfwidth(1e5));
}

// Sum of K independent shares each with variance sigma^2 C^2 / K has variance
// sigma^2 C^2; dropping one share leaves (K - 1) / K of it.
TEST(NoisyAverageTest, AggregateAndHospitalViewVariance) {
  const int k = 10;
  const double sigma = 1.5, c = 0.7;
  std::vector<std::vector<double>> shares;
  for (int h = 0; h < k; ++h) shares.push_back(noise_draws(sigma, c, k, 100 + h));
  std::vector<double> total(shares[0].size(), 0.0), minus_one(shares[0].size(), 0.0);
  for (int h = 0; h < k; ++h) {
    for (size_t i = 0; i < total.size(); ++i) {
      total[i] += shares[h][i];
      if (h != 0) minus_one[i] += shares[h][i];
    }
  }
  const double full = sample_variance(total);
  EXPECT_NEAR(full, sigma * sigma * c * c, 0.05 * sigma * sigma * c * c);
  EXPECT_NEAR(sample_variance(minus_one) / full, (k - 1.0) / k, 0.05 * (k - 1.0) / k);
}

TEST(NoisyAverageTest, DeterministicUnderSeed) {
  EXPECT_EQ(noise_draws(1.0, 1.0, 3, 5), noise_draws(1.0, 1.0, 3, 5));
  EXPECT_NE(noise_draws(1.0, 1.0, 3, 5), noise_draws(1.0, 1.0, 3, 6));
}

TEST(NoisyAverageWithVarianceTest, HitsRequestedVariance) {
  NoiseSource rng(30, 0);
  const std::vector<PerSampleGradient> batch = {{std::vector<double>(1000, 0.0)}};
  std::vector<double> draws;
  for (int i = 0; i < 100; ++i) {
    const auto v = noisy_average_with_variance(batch, 0.3, rng);
    draws.insert(draws.end(), v.begin(), v.end());
  }
  EXPECT_NEAR(sample_variance(draws), 0.3, 0.3 * oracle::variance_relative_halfwidth(1e5));
}

TEST(MomentumTest, BetaZeroCopiesGradient) {
  const auto s = momentum_step(MomentumState{{5.0, -1.0}, 3}, std::vector<double>{0.25, 2.0}, 0.0);
  EXPECT_EQ(s.buffer, (std::vector<double>{0.25, 2.0}));
  EXPECT_EQ(s.round, 4);
}

TEST(MomentumTest, GeometricScalar) {
  auto s = MomentumState::zeros(1);
  const std::vector<double> one = {1.0};
  s = momentum_step(s, one, 0.5);
  EXPECT_EQ(s.buffer[0], 1.0);
  s = momentum_step(s, one, 0.5);
  EXPECT_EQ(s.buffer[0], 1.5);
}

TEST(MomentumTest, MatchesClosedFormFromHistory) {
  NoiseSource rng(8, 8);
  const double beta = 0.9;
  const size_t dim = 16;
  auto s = MomentumState::zeros(dim);
  std::vector<std::vector<double>> history;
  for (int t = 1; t <= 200; ++t) {
    std::vector<double> g(dim);
    for (double& v : g) v = rng.gaussian();
    history.push_back(g);
    s = momentum_step(s, g, beta);
    for (size_t j = 0; j < dim; ++j) {
      double closed = 0, pw = 1;
      for (int i = 0; i < t; ++i) {
        closed += pw * history[static_cast<size_t>(t - 1 - i)][j];
        pw *= beta;
      }
      ASSERT_NEAR(s.buffer[j], closed, 1e-12) << "t=" << t << " j=" << j;
    }
  }
}

TEST(MomentumTest, LengthMismatch) {
  EXPECT_THROW(momentum_step(MomentumState::zeros(2), std::vector<double>{1.0}, 0.5),
               InvalidArgument);
}

TEST(SgdUpdateTest, Arithmetic) {
  ModelParams m;
  m.shape = {{"w", {1}}};
  m.values = {1.0};
  EXPECT_DOUBLE_EQ(sgd_update(m, MomentumState{{2.0}, 1}, 0.1).values[0], 0.8);
  EXPECT_EQ(sgd_update(m, MomentumState{{2.0}, 1}, 0.0).values, m.values);
  EXPECT_EQ(sgd_update(m, MomentumState::zeros(1), 0.1).values, m.values);
  EXPECT_THROW(sgd_update(m, MomentumState::zeros(2), 0.1), InvalidArgument);
}

TEST(PerHospitalNoiseVarianceTest, ClosedFormValueAndScaling) {
  const double v = per_hospital_noise_variance(1.0, 1e-4, 1.0, 100, 10);
  EXPECT_NEAR(v, 1.88670e-4, 1e-9);
  EXPECT_NEAR(per_hospital_noise_variance(1.0, 1e-4, 1.0, 100, 20), v / 2, 1e-18);
  EXPECT_NEAR(per_hospital_noise_variance(1.0, 1e-4, 2.0, 100, 10), v * 4, 1e-18);
  EXPECT_THROW(per_hospital_noise_variance(1.0, 1.25, 1.0, 100, 10), InvalidArgument);
  EXPECT_THROW(per_hospital_noise_variance(1.0, 1e-4, 1.0, 0, 10), InvalidArgument);
}

TEST(GaussianMechanismTest, ClosedFormValueAndScaling) {
  const double v = gaussian_mechanism_variance(1.0, 1e-5, 1.0);
  EXPECT_NEAR(v, 23.47214, 1e-5);  // 2 ln(125000)
  EXPECT_NEAR(gaussian_mechanism_variance(1.0, 1e-5, 3.0), 9 * v, 1e-12);
  EXPECT_NEAR(gaussian_mechanism_variance(2.0, 1e-5, 1.0), v / 4, 1e-12);
  EXPECT_THROW(gaussian_mechanism_variance(1.0, 1.0, 1.0), InvalidArgument);
  EXPECT_THROW(gaussian_mechanism_variance(0.0, 1e-5, 1.0), InvalidArgument);
}

TEST(HospitalViewTest, Values) {
  EXPECT_DOUBLE_EQ(hospital_view_epsilon(1.0, 2), std::sqrt(2.0));
  EXPECT_NEAR(hospital_view_epsilon(0.5, 10), 0.527046, 1e-6);
  const double big = hospital_view_epsilon(1.0, 1000000);
  EXPECT_GT(big, 1.0);
  EXPECT_LT(big, 1.000001);
  EXPECT_THROW(hospital_view_epsilon(1.0, 1), InvalidArgument);
}

TEST(DpConfigTest, Validation) {
  DpConfig c;
  EXPECT_NO_THROW(c.validate());
  c.beta = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = DpConfig{};
  c.q = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = DpConfig{};
  c.delta = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = DpConfig{};
  EXPECT_TRUE(c.delta_recommended_for(1000));
  EXPECT_FALSE(c.delta_recommended_for(100000));
}

}  // namespace
}  // namespace dpfl
