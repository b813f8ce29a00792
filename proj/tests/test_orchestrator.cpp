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

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "dpfl/accounting/rdp_accountant.hpp"
#include "dpfl/orchestrator/aggregator.hpp"
#include "dpfl/orchestrator/orchestrator.hpp"
#include "oracles.hpp"

namespace dpfl {
namespace {

Federation make_federation(size_t k, size_t per_hospital, size_t features, uint64_t seed,
                           double separation = 4.0) {
  const Dataset all = synth_dataset(k * per_hospital + 400, features, 2, seed, separation);
  auto [train, test] = split_train_test(all, k * per_hospital);
  return {partition_iid(train, k), test, make_logistic_model(features, 2)};
}

RunConfig base_config(Method m, int k) {
  RunConfig c;
  c.method = m;
  c.dp.num_hospitals = k;
  c.dp.q = 0.2;
  c.dp.sigma = 1.0;
  c.dp.eta = 0.1;
  c.dp.beta = 0.9;
  c.dp.max_rounds = 15;
  c.dp.epsilon = 50.0;
  c.dp.delta = 1e-4;
  c.aggregation = AggregationMode::kPlaintext;
  return c;
}

void expect_same_trajectory(const RunResult& a, const RunResult& b, double tol) {
  ASSERT_EQ(a.rounds.size(), b.rounds.size());
  for (size_t t = 0; t < a.rounds.size(); ++t) {
    EXPECT_NEAR(a.rounds[t].train_loss, b.rounds[t].train_loss, tol) << "round " << t + 1;
    EXPECT_EQ(a.rounds[t].epsilon_hat.has_value(), b.rounds[t].epsilon_hat.has_value());
    if (a.rounds[t].epsilon_hat && b.rounds[t].epsilon_hat) {
      EXPECT_EQ(*a.rounds[t].epsilon_hat, *b.rounds[t].epsilon_hat);
    }
  }
  ASSERT_EQ(a.final_model.size(), b.final_model.size());
  for (size_t j = 0; j < a.final_model.size(); ++j) {
    EXPECT_NEAR(a.final_model.values[j], b.final_model.values[j], tol) << "coordinate " << j;
  }
}

class ThrowingAggregator : public Aggregator {
 public:
  ModelParams average(uint32_t, std::span<const ModelParams>, std::span<const uint16_t>) override {
    throw ProtocolError("simulated transport failure");
  }
};

TEST(PoissonSampleTest, FullRateTakesEverything) {
  const Dataset d = synth_dataset(50, 3, 2, 1);
  NoiseSource rng(1, 1);
  EXPECT_EQ(poisson_sample(d, 1.0, rng).size(), 50u);
  EXPECT_THROW(poisson_sample(d, 0.0, rng), InvalidArgument);
}

TEST(PoissonSampleTest, MeanBatchSize) {
  const Dataset d = synth_dataset(293, 3, 2, 1);
  NoiseSource rng(2, 2);
  double total = 0;
  for (int i = 0; i < 10000; ++i) total += static_cast<double>(poisson_sample(d, 0.1, rng).size());
  EXPECT_NEAR(total / 10000, 29.3, 0.5);
}

TEST(PoissonSampleTest, DeterministicUnderSeed) {
  const Dataset d = synth_dataset(100, 3, 2, 1);
  NoiseSource a(3, 3), b(3, 3);
  const auto x = poisson_sample(d, 0.3, a), y = poisson_sample(d, 0.3, b);
  ASSERT_EQ(x.size(), y.size());
  for (size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i].features, y[i].features);
}

TEST(ParticipantsTest, DistinctSortedAndUniform) {
  NoiseSource rng(4, 4);
  std::vector<int> hits(11, 0);
  for (int t = 0; t < 20000; ++t) {
    const auto ids = sample_participants(10, 5, rng);
    ASSERT_EQ(ids.size(), 5u);
    ASSERT_TRUE(std::is_sorted(ids.begin(), ids.end()));
    ASSERT_EQ(std::set<uint16_t>(ids.begin(), ids.end()).size(), 5u);
    for (uint16_t id : ids) {
      ASSERT_GE(id, 1);
      ASSERT_LE(id, 10);
      ++hits[id];
    }
  }
  for (int id = 1; id <= 10; ++id) {
    EXPECT_NEAR(hits[id] / 20000.0, 0.5, oracle::binomial_halfwidth(0.5, 20000));
  }
  EXPECT_THROW(sample_participants(3, 4, rng), InvalidArgument);
}

TEST(ParticipantsTest, CountRoundsUp) {
  EXPECT_EQ(participant_count(10, 0.5), 5u);
  EXPECT_EQ(participant_count(3, 0.5), 2u);
  EXPECT_EQ(participant_count(1, 0.5), 1u);
  EXPECT_EQ(participant_count(10, 1.0), 10u);
  EXPECT_EQ(participant_count(10, 0.01), 1u);
}

TEST(RunConfigTest, DefaultsAndValidation) {
  RunConfig c = base_config(Method::kF, 10);
  EXPECT_DOUBLE_EQ(c.participation(), 0.5);
  c.method = Method::kDopamine;
  EXPECT_DOUBLE_EQ(c.participation(), 1.0);
  c.participation_fraction = 0.5;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = base_config(Method::kF, 10);
  c.fedavg_local_epochs = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_EQ(parse_method("DOPAMINE"), Method::kDopamine);
  EXPECT_EQ(method_name(Method::kFPDP), "FPDP");
  EXPECT_THROW(parse_method("SGD"), InvalidArgument);
}

TEST(ReductionTest, DopamineWithOneHospitalIsCdp) {
  const Federation fed = make_federation(1, 300, 5, 11);
  RunConfig d = base_config(Method::kDopamine, 1);
  RunConfig c = base_config(Method::kCDP, 1);
  for (uint64_t seed : {1u, 2u, 3u}) {
    expect_same_trajectory(run_dopamine(d, fed, seed), run_baseline_CDP(c, fed, seed), 1e-10);
  }
}

TEST(ReductionTest, FedAvgWithOneHospitalIsCentralized) {
  const Federation fed = make_federation(1, 300, 5, 12);
  RunConfig f = base_config(Method::kF, 1);
  f.fedavg_local_epochs = 1;
  f.participation_fraction = 1.0;
  const RunConfig c = base_config(Method::kC, 1);
  expect_same_trajectory(run_baseline_F(f, fed, 5), run_baseline_C(c, fed, 5), 1e-10);
}

TEST(ReductionTest, FpdpWithOneHospitalIsCdp) {
  const Federation fed = make_federation(1, 300, 5, 13);
  RunConfig f = base_config(Method::kFPDP, 1);
  f.dp.q = 1.0;
  f.dp.sigma = 3.0;
  f.fedavg_local_epochs = 1;
  f.participation_fraction = 1.0;
  RunConfig c = f;
  c.method = Method::kCDP;
  EXPECT_EQ(fpdp_steps_per_round(f), 1);
  expect_same_trajectory(run_baseline_FPDP(f, fed, 6), run_baseline_CDP(c, fed, 6), 1e-10);
}

TEST(ReductionTest, NoiselessUnclippedCdpIsFullBatchCentralized) {
  const Federation fed = make_federation(1, 300, 5, 14);
  RunConfig cdp = base_config(Method::kCDP, 1);
  cdp.dp.q = 1.0;
  cdp.dp.sigma = 0.0;
  cdp.dp.clip_norm = std::numeric_limits<double>::infinity();
  cdp.enforce_budget = false;
  RunConfig c = base_config(Method::kC, 1);
  c.batch_size = 300;
  const auto a = run_baseline_CDP(cdp, fed, 7), b = run_baseline_C(c, fed, 7);
  ASSERT_EQ(a.rounds.size(), b.rounds.size());
  for (size_t j = 0; j < a.final_model.size(); ++j) {
    EXPECT_NEAR(a.final_model.values[j], b.final_model.values[j], 1e-10);
  }
}

// sigma = 0, beta = 0, q = 1, K = 1: plain full-batch clipped gradient descent.
TEST(ReductionTest, NoiselessDopamineIsClippedGradientDescent) {
  const Federation fed = make_federation(1, 200, 4, 15);
  RunConfig cfg = base_config(Method::kDopamine, 1);
  cfg.dp.q = 1.0;
  cfg.dp.sigma = 0.0;
  cfg.dp.beta = 0.0;
  cfg.dp.clip_norm = 0.5;
  cfg.enforce_budget = false;
  const auto run = run_dopamine(cfg, fed, 8);
  ModelParams w = fed.initial_model;
  const auto& batch = fed.shards[0].samples();
  for (int t = 0; t < cfg.dp.max_rounds; ++t) {
    const auto lg = loss_and_per_sample_grads(w, batch);
    std::vector<double> g(w.size(), 0.0);
    for (const auto& pg : lg.grads) {
      const double n = std::sqrt(std::inner_product(pg.values.begin(), pg.values.end(), pg.values.begin(), 0.0));
      const double s = std::max(1.0, n / 0.5);
      for (size_t j = 0; j < g.size(); ++j) g[j] += pg.values[j] / s;
    }
    for (size_t j = 0; j < g.size(); ++j) w.values[j] -= 0.1 * g[j] / static_cast<double>(batch.size());
  }
  for (size_t j = 0; j < w.size(); ++j) EXPECT_NEAR(run.final_model.values[j], w.values[j], 1e-12);
}

TEST(ReductionTest, IdenticalShardsAverageToSingleHospital) {
  const Federation one = make_federation(1, 120, 4, 16);
  Federation four = one;
  four.shards = std::vector<Dataset>(4, one.shards[0]);
  RunConfig cfg = base_config(Method::kF, 1);
  cfg.participation_fraction = 1.0;
  cfg.batch_size = 120;  // full batch: the local shuffle only reorders a sum
  cfg.fedavg_local_epochs = 2;
  const auto a = run_baseline_F(cfg, one, 9);
  cfg.dp.num_hospitals = 4;
  const auto b = run_baseline_F(cfg, four, 9);
  for (size_t j = 0; j < a.final_model.size(); ++j) {
    EXPECT_NEAR(a.final_model.values[j], b.final_model.values[j], 1e-10);
  }
}

TEST(BudgetTest, TargetBelowFirstStepReturnsInitialModel) {
  const Federation fed = make_federation(3, 100, 4, 17);
  RunConfig cfg = base_config(Method::kDopamine, 3);
  cfg.dp.epsilon = 1e-3;
  const auto r = run_dopamine(cfg, fed, 1);
  EXPECT_TRUE(r.rounds.empty());
  EXPECT_TRUE(r.halted_on_budget);
  EXPECT_EQ(r.halt_round, 1);
  EXPECT_EQ(r.final_model.values, fed.initial_model.values);
  ASSERT_EQ(r.snapshot_hashes.size(), 1u);
}

// The returned model is the snapshot after round t* - 1, where t* is the first
// round whose spend the oracle puts above the target.
TEST(BudgetTest, ReturnedModelPrecedesFirstViolatingRound) {
  const Federation fed = make_federation(3, 100, 4, 18);
  for (Method m : {Method::kDopamine, Method::kCDP}) {
    RunConfig cfg = base_config(m, 3);
    cfg.dp.q = 0.1;
    cfg.dp.sigma = 1.5;
    cfg.dp.epsilon = 2.0;
    cfg.dp.max_rounds = 1000;
    const auto r = run_method(cfg, fed, 2);
    ASSERT_TRUE(r.halted_on_budget);
    const int t_star = r.halt_round;
    ASSERT_GT(t_star, 10);
    ASSERT_EQ(static_cast<int>(r.rounds.size()), t_star - 1);
    EXPECT_EQ(model_hash(r.final_model), r.snapshot_hashes[static_cast<size_t>(t_star - 1)]);
    const auto orders = default_rdp_orders();
    EXPECT_LE(oracle::epsilon_quadrature(0.1, 1.5, t_star - 1, 1e-4, orders), 2.0 * (1 + 1e-6));
    EXPECT_GT(oracle::epsilon_quadrature(0.1, 1.5, t_star, 1e-4, orders), 2.0 * (1 - 1e-6));
    for (const auto& rec : r.rounds) EXPECT_LE(*rec.epsilon_hat, 2.0);
  }
}

TEST(BudgetTest, EpsilonMatchesAccountantTable) {
  const Federation fed = make_federation(2, 100, 4, 19);
  RunConfig cfg = base_config(Method::kCDP, 2);
  const auto r = run_baseline_CDP(cfg, fed, 3);
  RdpAccountant acc(cfg.dp.q, cfg.dp.sigma);
  for (const auto& rec : r.rounds) {
    acc.step();
    EXPECT_EQ(*rec.epsilon_hat, acc.spend(cfg.dp.delta).epsilon_hat);
  }
}

TEST(BudgetTest, PerRoundCalibrationSpendsExactlyTheBudget) {
  const Federation fed = make_federation(3, 100, 4, 20);
  RunConfig cfg = base_config(Method::kDopamine, 3);
  cfg.dp.calibration = CalibrationMode::kPerRound;
  cfg.dp.epsilon = 1.0;
  cfg.dp.max_rounds = 7;
  const auto r = run_dopamine(cfg, fed, 4);
  ASSERT_EQ(r.rounds.size(), 7u);
  EXPECT_NEAR(*r.rounds.back().epsilon_hat, 1.0, 1e-12);
  EXPECT_FALSE(r.halted_on_budget);
}

TEST(BudgetTest, ZeroNoiseIsInfinitelyExpensive) {
  RunConfig cfg = base_config(Method::kCDP, 1);
  cfg.dp.sigma = 0.0;
  PrivacyLedger ledger(cfg.dp);
  EXPECT_EQ(ledger.spend().epsilon_hat, 0.0);
  EXPECT_TRUE(ledger.next_step_exceeds(1e6));
  const Federation fed = make_federation(1, 50, 3, 21);
  EXPECT_TRUE(run_baseline_CDP(cfg, fed, 1).rounds.empty());
}

TEST(BudgetTest, FpdpReportsWorstHospitalAndStopsWhenAllExhausted) {
  const Federation fed = make_federation(4, 80, 4, 22);
  RunConfig cfg = base_config(Method::kFPDP, 4);
  cfg.dp.q = 0.25;
  cfg.dp.sigma = 1.5;
  cfg.dp.epsilon = 3.0;
  cfg.dp.max_rounds = 500;
  cfg.fedavg_local_epochs = 1;
  const auto r = run_baseline_FPDP(cfg, fed, 5);
  EXPECT_TRUE(r.halted_on_budget);
  double prev = 0;
  for (const auto& rec : r.rounds) {
    EXPECT_LE(*rec.epsilon_hat, 3.0);
    EXPECT_GE(*rec.epsilon_hat, prev);
    prev = *rec.epsilon_hat;
  }
}

TEST(RoundTest, AbortedAggregationChargesNothing) {
  const Federation fed = make_federation(3, 60, 4, 23);
  RunConfig cfg = base_config(Method::kDopamine, 3);
  auto hospitals = make_hospitals(fed.shards, fed.initial_model.size(), 1);
  PrivacyLedger ledger(cfg.dp);
  ThrowingAggregator bad;
  hospitals[0].momentum.buffer[0] = 0.25;
  EXPECT_THROW(dopamine_round(fed.initial_model, hospitals, cfg.dp, ledger, bad, 1), ProtocolError);
  EXPECT_EQ(ledger.rounds(), 0);
  EXPECT_EQ(hospitals[0].momentum.buffer[0], 0.25);
  EXPECT_EQ(hospitals[1].momentum.round, 0);
}

// Average of per-hospital momentum buffers equals the momentum recursion run
// on the averaged noisy gradients, and the global model moves by -eta times
// that average.
TEST(RoundTest, MomentumEquivalenceAndGlobalUpdateIdentity) {
  const size_t k = 5;
  const Federation fed = make_federation(k, 80, 6, 24);
  RunConfig cfg = base_config(Method::kDopamine, static_cast<int>(k));
  auto hospitals = make_hospitals(fed.shards, fed.initial_model.size(), 3);
  PrivacyLedger ledger(cfg.dp);
  PlaintextAggregator agg;
  ModelParams w = fed.initial_model;
  const size_t dim = w.size();
  std::vector<std::vector<double>> avg_noisy_history;
  for (uint32_t t = 1; t <= 20; ++t) {
    std::vector<double> avg_noisy(dim, 0.0);
    for (auto& h : hospitals) {
      NoiseSource replay = h.rng;
      const auto g = dp_gradient(w, h.shard, cfg.dp, static_cast<int>(k), replay);
      for (size_t j = 0; j < dim; ++j) avg_noisy[j] += g.gradient[j] / static_cast<double>(k);
    }
    avg_noisy_history.push_back(avg_noisy);
    const ModelParams prev = w;
    const auto out = dopamine_round(w, hospitals, cfg.dp, ledger, agg, t);
    ASSERT_FALSE(out.halted);
    w = out.global;
    for (size_t j = 0; j < dim; ++j) {
      double avg_buffer = 0;
      for (const auto& h : hospitals) avg_buffer += h.momentum.buffer[j];
      avg_buffer /= static_cast<double>(k);
      double closed = 0, pw = 1;
      for (size_t i = 0; i < avg_noisy_history.size(); ++i) {
        closed += pw * avg_noisy_history[avg_noisy_history.size() - 1 - i][j];
        pw *= cfg.dp.beta;
      }
      ASSERT_NEAR(avg_buffer, closed, 1e-12) << "t=" << t << " j=" << j;
      ASSERT_NEAR(w.values[j], prev.values[j] - cfg.dp.eta * avg_buffer, 1e-12);
    }
  }
  EXPECT_EQ(ledger.rounds(), 20);
}

TEST(RoundTest, HospitalCountMustMatchConfig) {
  const Federation fed = make_federation(3, 60, 4, 25);
  RunConfig cfg = base_config(Method::kDopamine, 4);
  auto hospitals = make_hospitals(fed.shards, fed.initial_model.size(), 1);
  PrivacyLedger ledger(cfg.dp);
  PlaintextAggregator agg;
  EXPECT_THROW(dopamine_round(fed.initial_model, hospitals, cfg.dp, ledger, agg, 1), InvalidArgument);
}

// FPDP hospitals add sigma^2 C^2 each, DOPAMINE hospitals sigma^2 C^2 / K.
TEST(NoiseTest, FpdpToDopaminePerHospitalVarianceIsK) {
  const int k = 10;
  const Dataset shard = synth_dataset(40, 3, 2, 26);
  const ModelParams m = make_logistic_model(3, 2);
  DpConfig dp;
  dp.q = 1.0;
  dp.sigma = 2.0;
  auto noise_var = [&](int parties, uint64_t seed) {
    NoiseSource rng(seed, 0);
    NoiseSource clean_rng(seed, 1);
    DpConfig zero = dp;
    zero.sigma = 0.0;
    const auto mean = dp_gradient(m, shard, zero, 1, clean_rng).gradient;
    std::vector<double> dev;
    for (int i = 0; i < 20000; ++i) {
      const auto g = dp_gradient(m, shard, dp, parties, rng).gradient;
      for (size_t j = 0; j < g.size(); ++j) dev.push_back((g[j] - mean[j]) * 40.0);
    }
    double s = 0;
    for (double v : dev) s += v * v;
    return s / static_cast<double>(dev.size());
  };
  const double fpdp = noise_var(1, 1), dopamine = noise_var(k, 2);
  EXPECT_NEAR(fpdp, 4.0, 4.0 * oracle::variance_relative_halfwidth(120000));
  EXPECT_NEAR(fpdp / dopamine, k, k * 0.05);
}

TEST(NoiseTest, EmptyBatchContributesNoiseOnly) {
  const Dataset shard = synth_dataset(3, 3, 2, 27);
  const ModelParams m = make_logistic_model(3, 2);
  DpConfig dp;
  dp.q = 1e-9;
  dp.sigma = 1.0;
  NoiseSource rng(1, 1);
  const auto g = dp_gradient(m, shard, dp, 1, rng);
  EXPECT_EQ(g.batch_size, 0u);
  EXPECT_TRUE(std::isnan(g.batch_loss));
  EXPECT_TRUE(std::any_of(g.gradient.begin(), g.gradient.end(), [](double v) { return v != 0.0; }));
}

TEST(AuditTest, SecureMatchesPlaintextWithinQuantization) {
  const Federation fed = make_federation(3, 80, 5, 28);
  RunConfig cfg = base_config(Method::kDopamine, 3);
  cfg.dp.max_rounds = 5;
  cfg.aggregation = AggregationMode::kPlaintextAudit;
  const auto audited = run_dopamine(cfg, fed, 6);
  EXPECT_EQ(audited.rounds.size(), 5u);
  EXPECT_LE(audited.audit_deviation, 5e-4);
  EXPECT_GT(audited.audit_deviation, 0.0);

  cfg.dp.max_rounds = 1;
  cfg.aggregation = AggregationMode::kSecure;
  const auto secure = run_dopamine(cfg, fed, 6);
  cfg.aggregation = AggregationMode::kPlaintext;
  const auto plain = run_dopamine(cfg, fed, 6);
  for (size_t j = 0; j < plain.final_model.size(); ++j) {
    EXPECT_NEAR(secure.final_model.values[j], plain.final_model.values[j], 5e-4);
  }
}

TEST(AuditTest, OverBudgetWeightsSurfaceRangeError) {
  const Federation fed = make_federation(2, 40, 3, 29);
  RunConfig cfg = base_config(Method::kDopamine, 2);
  cfg.aggregation = AggregationMode::kSecure;
  Federation big = fed;
  big.initial_model.values[0] = 11.0;  // budget for K = 2 is 20480 / 2000 = 10.24
  EXPECT_THROW(run_dopamine(cfg, big, 1), RangeError);
}

TEST(BaselineTest, CentralizedLearnsSeparableData) {
  const Federation fed = make_federation(4, 250, 10, 30);
  RunConfig cfg = base_config(Method::kC, 4);
  cfg.dp.max_rounds = 10;
  const auto r = run_baseline_C(cfg, fed, 1);
  EXPECT_GE(r.rounds.back().test_accuracy, 0.95);
  // Loss falls on average: 5-round moving means are non-increasing.
  std::vector<double> ma;
  for (size_t t = 4; t < r.rounds.size(); ++t) {
    double s = 0;
    for (size_t i = t - 4; i <= t; ++i) s += r.rounds[i].train_loss;
    ma.push_back(s / 5);
  }
  for (size_t i = 1; i < ma.size(); ++i) EXPECT_LE(ma[i], ma[i - 1] + 1e-9);
}

TEST(BaselineTest, RunsAreDeterministicUnderSeed) {
  const Federation fed = make_federation(4, 60, 4, 31);
  for (Method m : kAllMethods) {
    RunConfig cfg = base_config(m, 4);
    cfg.dp.max_rounds = 4;
    const auto a = run_method(cfg, fed, 11), b = run_method(cfg, fed, 11), c = run_method(cfg, fed, 12);
    EXPECT_EQ(a.snapshot_hashes, b.snapshot_hashes) << method_name(m);
    EXPECT_NE(a.snapshot_hashes, c.snapshot_hashes) << method_name(m);
  }
}

TEST(BaselineTest, FedAvgCloseToCentralizedOverSeeds) {
  double c_sum = 0, f_sum = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const Federation fed = make_federation(10, 40, 5, 100 + seed, 2.0);
    RunConfig c = base_config(Method::kC, 10);
    c.dp.max_rounds = 10;
    RunConfig f = c;
    f.method = Method::kF;
    c_sum += run_baseline_C(c, fed, seed).rounds.back().test_accuracy;
    f_sum += run_baseline_F(f, fed, seed).rounds.back().test_accuracy;
  }
  EXPECT_GE(f_sum / 5, c_sum / 5 - 0.05);
}

}  // namespace
}  // namespace dpfl
