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

// Training loops: the federated DP algorithm (one noisy clipped step per
// hospital per round, averaged through an Aggregator) and the four reference
// methods it is compared against:
//   C     centralized minibatch SGD with momentum, no privacy;
//   CDP   centralized DP-SGD;
//   F     FedAvg, a random subset of hospitals trains several local epochs;
//   FPDP  FedAvg where every local step is a DP-SGD step on the local shard.
//
// Seeding. Hospital k draws everything (sampling, noise, shuffles) from
// NoiseSource(seed, k). The centralized methods use stream 1, so with K = 1
// they consume exactly the randomness hospital 1 would. Server-side
// participant selection has its own stream.

#ifndef DPFL_ORCHESTRATOR_ORCHESTRATOR_HPP_
#define DPFL_ORCHESTRATOR_ORCHESTRATOR_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpfl/accounting/rdp_accountant.hpp"
#include "dpfl/common/error.hpp"
#include "dpfl/common/random.hpp"
#include "dpfl/dp/dp_engine.hpp"
#include "dpfl/model/dataset.hpp"
#include "dpfl/model/model.hpp"
#include "dpfl/orchestrator/aggregator.hpp"

namespace dpfl {

enum class Method { kC, kCDP, kF, kFPDP, kDopamine };

inline constexpr Method kAllMethods[] = {Method::kC, Method::kCDP, Method::kF, Method::kFPDP,
                                         Method::kDopamine};

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kC: return "C";
    case Method::kCDP: return "CDP";
    case Method::kF: return "F";
    case Method::kFPDP: return "FPDP";
    case Method::kDopamine: return "DOPAMINE";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : kAllMethods) {
    if (method_name(m) == s) return m;
  }
  throw InvalidArgument("unknown method '" + s + "' (expected C, CDP, F, FPDP or DOPAMINE)");
}

inline bool is_dp_method(Method m) {
  return m == Method::kCDP || m == Method::kFPDP || m == Method::kDopamine;
}

inline constexpr uint64_t kSelectionStream = 0x5e1ec7;
inline constexpr uint64_t kInitStream = 0x1417;

struct RunConfig {
  Method method = Method::kDopamine;
  DpConfig dp;
  int fedavg_local_epochs = 5;
  // Negative means the method default: 0.5 for F and FPDP, 1.0 otherwise.
  double participation_fraction = -1.0;
  // Minibatch size of the non-private methods.
  size_t batch_size = 32;
  // Off only in tests that need sigma = 0 without an accountant stopping
  // training immediately.
  bool enforce_budget = true;
  AggregationMode aggregation = AggregationMode::kSecure;
  TransportKind transport = TransportKind::kLoopback;
  std::vector<uint64_t> seeds{1};

  double participation() const {
    if (participation_fraction >= 0.0) return participation_fraction;
    return (method == Method::kF || method == Method::kFPDP) ? 0.5 : 1.0;
  }

  void validate() const {
    dp.validate();
    require(fedavg_local_epochs >= 1, "fedavg_local_epochs must be >= 1");
    const double p = participation();
    require(p > 0.0 && p <= 1.0, "participation_fraction must be in (0, 1]");
    require(method != Method::kDopamine || p == 1.0,
            "DOPAMINE aggregates every hospital; participation_fraction must be 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(!seeds.empty(), "at least one seed is required");
  }
};

// Hospital shards plus the held-out set and the common starting model.
struct Federation {
  std::vector<Dataset> shards;
  Dataset test;
  ModelParams initial_model;

  Dataset pooled() const { return concatenate(shards, "pooled"); }
  size_t num_hospitals() const { return shards.size(); }
};

struct HospitalState {
  uint16_t id = 0;
  Dataset shard;
  MomentumState momentum;
  NoiseSource rng;
};

inline std::vector<HospitalState> make_hospitals(const std::vector<Dataset>& shards,
                                                 size_t model_dim, uint64_t seed) {
  std::vector<HospitalState> out;
  for (size_t k = 0; k < shards.size(); ++k) {
    const auto id = static_cast<uint16_t>(k + 1);
    out.push_back({id, shards[k], MomentumState::zeros(model_dim), NoiseSource(seed, id)});
  }
  return out;
}

// Includes each sample independently with probability q.
inline std::vector<LabeledSample> poisson_sample(const Dataset& shard, double q,
                                                 NoiseSource& rng) {
  require(q > 0.0 && q <= 1.0, "poisson_sample: q must be in (0, 1]");
  std::vector<LabeledSample> batch;
  for (const auto& s : shard.samples()) {
    if (rng.bernoulli(q)) batch.push_back(s);
  }
  return batch;
}

// `count` distinct ids from 1..n, ascending.
inline std::vector<uint16_t> sample_participants(size_t n, size_t count, NoiseSource& rng) {
  require(count >= 1 && count <= n, "sample_participants: bad count");
  std::vector<uint16_t> ids(n);
  for (size_t i = 0; i < n; ++i) ids[i] = static_cast<uint16_t>(i + 1);
  for (size_t i = 0; i < count; ++i) {
    const size_t j = i + rng.uniform_below(n - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline size_t participant_count(size_t num_hospitals, double fraction) {
  const double raw = fraction * static_cast<double>(num_hospitals);
  const auto n = static_cast<size_t>(std::ceil(raw - 1e-9));
  return std::clamp<size_t>(n, 1, num_hospitals);
}

// Privacy bookkeeping for one data holder: the moments accountant in
// multiplier mode, basic composition of (eps/T, delta/T) rounds in per-round
// mode.
class PrivacyLedger {
 public:
  explicit PrivacyLedger(const DpConfig& dp) : delta_(dp.delta) {
    if (dp.calibration == CalibrationMode::kPerRound) {
      simple_.emplace(dp.epsilon / dp.max_rounds, dp.delta / dp.max_rounds);
    } else if (dp.sigma > 0.0) {
      rdp_.emplace(dp.q, dp.sigma);
    }
  }

  PrivacySpend peek(int64_t extra) const {
    if (simple_) return simple_->peek(extra);
    if (rdp_) return rdp_->peek(extra, delta_);
    const int64_t t = rounds_ + extra;
    return {t == 0 ? 0.0 : std::numeric_limits<double>::infinity(), delta_, t, 0.0};
  }
  PrivacySpend spend() const { return peek(0); }

  // True when one more step would push the spend past `epsilon`. The tiny
  // slack absorbs rounding in t * (eps / T).
  bool next_step_exceeds(double epsilon) const {
    const double slack = simple_ ? 1e-12 * epsilon : 0.0;
    return peek(1).epsilon_hat > epsilon + slack;
  }

  void charge() {
    if (simple_) simple_->step();
    if (rdp_) rdp_->step();
    ++rounds_;
  }

  int64_t rounds() const { return rounds_; }

 private:
  double delta_;
  std::optional<RdpAccountant> rdp_;
  std::optional<SimpleCompositionAccountant> simple_;
  int64_t rounds_ = 0;
};

struct NoisyGradient {
  std::vector<double> gradient;
  size_t batch_size = 0;
  double batch_loss = std::numeric_limits<double>::quiet_NaN();  // NaN when empty
};

// Poisson sample, clip every per-sample gradient, noisy average. `noise_parties`
// is K in the per-hospital noise variance sigma^2 C^2 / K. An empty batch
// yields a noise-only gradient scaled as if one sample had been drawn.
inline NoisyGradient dp_gradient(const ModelParams& model, const Dataset& shard,
                                 const DpConfig& dp, int noise_parties, NoiseSource& rng) {
  NoisyGradient out;
  const auto batch = poisson_sample(shard, dp.q, rng);
  out.batch_size = batch.size();
  const bool per_round = dp.calibration == CalibrationMode::kPerRound;
  const double eps_round = dp.epsilon / dp.max_rounds;
  const double delta_round = dp.delta / dp.max_rounds;
  if (batch.empty()) {
    if (per_round) {
      const double var =
          per_hospital_noise_variance(eps_round, delta_round, dp.clip_norm, 1, noise_parties);
      out.gradient.resize(model.size());
      for (double& v : out.gradient) v = rng.gaussian(std::sqrt(var));
    } else {
      out.gradient = noise_only_average(model.size(), dp.sigma, dp.clip_norm, noise_parties, rng);
    }
    return out;
  }
  LossAndGrads lg = loss_and_per_sample_grads(model, batch);
  out.batch_loss = lg.loss;
  for (auto& g : lg.grads) g = clip_gradient(g, dp.clip_norm);
  if (per_round) {
    const double var = per_hospital_noise_variance(eps_round, delta_round, dp.clip_norm,
                                             batch.size(), noise_parties);
    out.gradient = noisy_average_with_variance(lg.grads, var, rng);
  } else {
    out.gradient = noisy_average(lg.grads, dp.sigma, dp.clip_norm, noise_parties, rng);
  }
  return out;
}

// One pass of shuffled minibatch SGD with momentum, in place.
inline void local_sgd_epoch(ModelParams& model, MomentumState& momentum, const Dataset& shard,
                            size_t batch_size, double eta, double beta, NoiseSource& rng) {
  std::vector<size_t> order(shard.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_below(i)]);
  }
  std::vector<LabeledSample> batch;
  for (size_t begin = 0; begin < order.size(); begin += batch_size) {
    batch.clear();
    const size_t end = std::min(order.size(), begin + batch_size);
    for (size_t i = begin; i < end; ++i) batch.push_back(shard[order[i]]);
    const auto lg = mean_loss_and_gradient(model, batch);
    momentum = momentum_step(momentum, lg.gradient, beta);
    model = sgd_update(model, momentum, eta);
  }
}

struct RoundOutcome {
  ModelParams global;
  bool halted = false;  // budget reached; `global` is the previous model
  std::vector<size_t> batch_sizes;
  int empty_batches = 0;
  PrivacySpend spend;
};

// One round of the federated DP algorithm. Every hospital takes exactly one
// noisy clipped momentum step from `global`; the local models are averaged
// by `aggregator`. The budget is checked before any work: if one more step
// would exceed dp.epsilon, the round does nothing and reports halted.
// Hospital momentum and the ledger are updated only after aggregation
// succeeds, so an aborted round leaves no charge behind.
inline RoundOutcome dopamine_round(const ModelParams& global,
                                   std::vector<HospitalState>& hospitals, const DpConfig& dp,
                                   PrivacyLedger& ledger, Aggregator& aggregator,
                                   uint32_t round, bool enforce_budget = true) {
  require(!hospitals.empty(), "dopamine_round: no hospitals");
  require(static_cast<int>(hospitals.size()) == dp.num_hospitals,
          "dopamine_round: hospital count differs from dp.num_hospitals");
  RoundOutcome out;
  if (enforce_budget && ledger.next_step_exceeds(dp.epsilon)) {
    out.global = global;
    out.halted = true;
    out.spend = ledger.spend();
    return out;
  }
  aggregator.broadcast(global, round);
  const int k_count = static_cast<int>(hospitals.size());
  std::vector<MomentumState> next_momentum;
  std::vector<ModelParams> locals;
  std::vector<uint16_t> ids;
  for (auto& h : hospitals) {
    NoisyGradient g = dp_gradient(global, h.shard, dp, k_count, h.rng);
    out.batch_sizes.push_back(g.batch_size);
    if (g.batch_size == 0) ++out.empty_batches;
    next_momentum.push_back(momentum_step(h.momentum, g.gradient, dp.beta));
    locals.push_back(sgd_update(global, next_momentum.back(), dp.eta));
    ids.push_back(h.id);
  }
  out.global = aggregator.average(round, locals, ids);
  for (size_t k = 0; k < hospitals.size(); ++k) {
    hospitals[k].momentum = std::move(next_momentum[k]);
  }
  ledger.charge();
  out.spend = ledger.spend();
  return out;
}

struct RoundRecord {
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  std::optional<double> epsilon_hat;
  std::vector<size_t> batch_sizes;
  int empty_batches = 0;
  double wall_ms = 0.0;
};

struct RunResult {
  Method method = Method::kC;
  uint64_t seed = 0;
  double delta = 0.0;
  std::vector<RoundRecord> rounds;
  ModelParams final_model;
  // Hash of the global model after each completed round; [0] is the start.
  std::vector<uint64_t> snapshot_hashes;
  bool halted_on_budget = false;
  int halt_round = 0;  // round that would have exceeded the budget
  double audit_deviation = 0.0;
};

using RoundCallback = std::function<void(const RoundRecord&)>;

namespace internal {

class RunRecorder {
 public:
  RunRecorder(Method method, uint64_t seed, const RunConfig& cfg, const Federation& fed,
              RoundCallback cb)
      : train_(fed.pooled()), test_(fed.test), cb_(std::move(cb)) {
    result_.method = method;
    result_.seed = seed;
    result_.delta = cfg.dp.delta;
    result_.final_model = fed.initial_model;
    result_.snapshot_hashes.push_back(model_hash(fed.initial_model));
    start_ = std::chrono::steady_clock::now();
  }

  void record(int round, const ModelParams& global, std::optional<double> eps,
              std::vector<size_t> batch_sizes = {}, int empty = 0) {
    RoundRecord r;
    r.round = round;
    r.train_loss = mean_loss(global, train_.samples());
    r.test_accuracy = evaluate(global, test_).accuracy;
    r.epsilon_hat = eps;
    r.batch_sizes = std::move(batch_sizes);
    r.empty_batches = empty;
    const auto now = std::chrono::steady_clock::now();
    r.wall_ms = std::chrono::duration<double, std::milli>(now - start_).count();
    start_ = now;
    result_.final_model = global;
    result_.snapshot_hashes.push_back(model_hash(global));
    result_.rounds.push_back(r);
    if (cb_) cb_(result_.rounds.back());
  }

  void halt(int round) {
    result_.halted_on_budget = true;
    result_.halt_round = round;
  }

  RunResult& result() { return result_; }

 private:
  Dataset train_;
  Dataset test_;
  RoundCallback cb_;
  RunResult result_;
  std::chrono::steady_clock::time_point start_;
};

inline void check_federation(const RunConfig& cfg, const Federation& fed) {
  cfg.validate();
  require(!fed.shards.empty(), "federation has no hospitals");
  require(!fed.test.empty(), "federation has no test data");
  fed.initial_model.validate();
}

}  // namespace internal

inline RunResult run_baseline_C(const RunConfig& cfg, const Federation& fed, uint64_t seed,
                                RoundCallback cb = {}) {
  internal::check_federation(cfg, fed);
  internal::RunRecorder rec(Method::kC, seed, cfg, fed, std::move(cb));
  const Dataset pooled = fed.pooled();
  ModelParams w = fed.initial_model;
  MomentumState mom = MomentumState::zeros(w.size());
  NoiseSource rng(seed, 1);
  for (int t = 1; t <= cfg.dp.max_rounds; ++t) {
    local_sgd_epoch(w, mom, pooled, cfg.batch_size, cfg.dp.eta, cfg.dp.beta, rng);
    rec.record(t, w, std::nullopt);
  }
  return std::move(rec.result());
}

inline RunResult run_baseline_CDP(const RunConfig& cfg, const Federation& fed, uint64_t seed,
                                  RoundCallback cb = {}) {
  internal::check_federation(cfg, fed);
  internal::RunRecorder rec(Method::kCDP, seed, cfg, fed, std::move(cb));
  const Dataset pooled = fed.pooled();
  ModelParams w = fed.initial_model;
  MomentumState mom = MomentumState::zeros(w.size());
  NoiseSource rng(seed, 1);
  PrivacyLedger ledger(cfg.dp);
  for (int t = 1; t <= cfg.dp.max_rounds; ++t) {
    if (cfg.enforce_budget && ledger.next_step_exceeds(cfg.dp.epsilon)) {
      rec.halt(t);
      break;
    }
    const NoisyGradient g = dp_gradient(w, pooled, cfg.dp, 1, rng);
    mom = momentum_step(mom, g.gradient, cfg.dp.beta);
    w = sgd_update(w, mom, cfg.dp.eta);
    ledger.charge();
    rec.record(t, w, ledger.spend().epsilon_hat, {g.batch_size}, g.batch_size == 0 ? 1 : 0);
  }
  return std::move(rec.result());
}

inline RunResult run_baseline_F(const RunConfig& cfg, const Federation& fed, uint64_t seed,
                                RoundCallback cb = {}) {
  internal::check_federation(cfg, fed);
  internal::RunRecorder rec(Method::kF, seed, cfg, fed, std::move(cb));
  ModelParams w = fed.initial_model;
  auto hospitals = make_hospitals(fed.shards, w.size(), seed);
  NoiseSource selector(seed, kSelectionStream);
  const size_t count = participant_count(hospitals.size(), cfg.participation());
  for (int t = 1; t <= cfg.dp.max_rounds; ++t) {
    const auto ids = sample_participants(hospitals.size(), count, selector);
    std::vector<ModelParams> locals;
    for (uint16_t id : ids) {
      auto& h = hospitals[id - 1];
      ModelParams local = w;
      for (int e = 0; e < cfg.fedavg_local_epochs; ++e) {
        local_sgd_epoch(local, h.momentum, h.shard, cfg.batch_size, cfg.dp.eta, cfg.dp.beta,
                        h.rng);
      }
      locals.push_back(std::move(local));
    }
    w = plain_average(locals);
    rec.record(t, w, std::nullopt);
  }
  return std::move(rec.result());
}

// Local DP-SGD steps per round: fedavg_local_epochs passes of round(1/q)
// Poisson-sampled steps each.
inline int fpdp_steps_per_round(const RunConfig& cfg) {
  const auto per_epoch = std::max<long>(1, std::lround(1.0 / cfg.dp.q));
  return cfg.fedavg_local_epochs * static_cast<int>(per_epoch);
}

// Each hospital keeps its own ledger over its own shard; the reported spend
// is the worst one. A hospital whose next step would exceed the budget stops
// contributing; the run halts when no hospital can take another step.
inline RunResult run_baseline_FPDP(const RunConfig& cfg, const Federation& fed, uint64_t seed,
                                   RoundCallback cb = {}) {
  internal::check_federation(cfg, fed);
  internal::RunRecorder rec(Method::kFPDP, seed, cfg, fed, std::move(cb));
  ModelParams w = fed.initial_model;
  auto hospitals = make_hospitals(fed.shards, w.size(), seed);
  std::vector<PrivacyLedger> ledgers(hospitals.size(), PrivacyLedger(cfg.dp));
  NoiseSource selector(seed, kSelectionStream);
  const size_t count = participant_count(hospitals.size(), cfg.participation());
  const int steps = fpdp_steps_per_round(cfg);
  auto exhausted = [&](size_t k) {
    return cfg.enforce_budget && ledgers[k].next_step_exceeds(cfg.dp.epsilon);
  };
  for (int t = 1; t <= cfg.dp.max_rounds; ++t) {
    bool any_left = false;
    for (size_t k = 0; k < hospitals.size(); ++k) any_left = any_left || !exhausted(k);
    if (!any_left) {
      rec.halt(t);
      break;
    }
    const auto ids = sample_participants(hospitals.size(), count, selector);
    std::vector<ModelParams> locals;
    std::vector<size_t> batch_sizes;
    int empty = 0;
    for (uint16_t id : ids) {
      auto& h = hospitals[id - 1];
      ModelParams local = w;
      int taken = 0;
      for (int s = 0; s < steps && !exhausted(id - 1); ++s) {
        const NoisyGradient g = dp_gradient(local, h.shard, cfg.dp, 1, h.rng);
        batch_sizes.push_back(g.batch_size);
        if (g.batch_size == 0) ++empty;
        h.momentum = momentum_step(h.momentum, g.gradient, cfg.dp.beta);
        local = sgd_update(local, h.momentum, cfg.dp.eta);
        ledgers[id - 1].charge();
        ++taken;
      }
      if (taken > 0) locals.push_back(std::move(local));
    }
    if (!locals.empty()) w = plain_average(locals);
    double worst = 0.0;
    for (const auto& l : ledgers) worst = std::max(worst, l.spend().epsilon_hat);
    rec.record(t, w, worst, std::move(batch_sizes), empty);
  }
  return std::move(rec.result());
}

inline RunResult run_dopamine(const RunConfig& cfg, const Federation& fed, uint64_t seed,
                              RoundCallback cb = {}) {
  internal::check_federation(cfg, fed);
  require(static_cast<size_t>(cfg.dp.num_hospitals) == fed.num_hospitals(),
          "dp.num_hospitals differs from the number of shards");
  internal::RunRecorder rec(Method::kDopamine, seed, cfg, fed, std::move(cb));
  ModelParams w = fed.initial_model;
  auto hospitals = make_hospitals(fed.shards, w.size(), seed);
  PrivacyLedger ledger(cfg.dp);
  SecureAggregatorOptions opts;
  opts.transport = cfg.transport;
  opts.seed = seed;
  auto aggregator = make_aggregator(cfg.aggregation, hospitals.size(), opts);
  for (int t = 1; t <= cfg.dp.max_rounds; ++t) {
    RoundOutcome r = dopamine_round(w, hospitals, cfg.dp, ledger, *aggregator,
                                    static_cast<uint32_t>(t), cfg.enforce_budget);
    if (r.halted) {
      rec.halt(t);
      break;
    }
    w = std::move(r.global);
    rec.record(t, w, r.spend.epsilon_hat, std::move(r.batch_sizes), r.empty_batches);
  }
  rec.result().audit_deviation = aggregator->max_audit_deviation();
  return std::move(rec.result());
}

inline RunResult run_method(const RunConfig& cfg, const Federation& fed, uint64_t seed,
                            RoundCallback cb = {}) {
  switch (cfg.method) {
    case Method::kC: return run_baseline_C(cfg, fed, seed, std::move(cb));
    case Method::kCDP: return run_baseline_CDP(cfg, fed, seed, std::move(cb));
    case Method::kF: return run_baseline_F(cfg, fed, seed, std::move(cb));
    case Method::kFPDP: return run_baseline_FPDP(cfg, fed, seed, std::move(cb));
    case Method::kDopamine: return run_dopamine(cfg, fed, seed, std::move(cb));
  }
  throw InvalidArgument("run_method: unknown method");
}

}  // namespace dpfl

#endif  // DPFL_ORCHESTRATOR_ORCHESTRATOR_HPP_
