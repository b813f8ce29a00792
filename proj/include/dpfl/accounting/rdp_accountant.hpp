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

#ifndef DPFL_ACCOUNTING_RDP_ACCOUNTANT_HPP_
#define DPFL_ACCOUNTING_RDP_ACCOUNTANT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "dpfl/common/error.hpp"

namespace dpfl {

namespace internal {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log(exp(a) - exp(b)), requires a >= b.
inline double log_sub(double a, double b) {
  if (b == kNegInf) return a;
  if (a < b) throw InvalidArgument("log_sub: result would be negative");
  if (a == b) return kNegInf;
  return a + std::log(-std::expm1(b - a));
}

// log(erfc(x)) that stays finite far into the upper tail.
inline double log_erfc(double x) {
  if (x < 25.0) return std::log(std::erfc(x));
  const double x2 = x * x;
  const double series =
      1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2);
  return -x2 - std::log(x) - 0.5 * std::log(std::numbers::pi) + std::log(series);
}

// log A_alpha for integer alpha:
//   A = sum_k C(alpha, k) (1-q)^(alpha-k) q^k exp((k^2 - k) / (2 sigma^2)).
inline double log_a_integer(double q, double sigma, int alpha) {
  double log_a = kNegInf;
  const double lg_alpha = std::lgamma(alpha + 1.0);
  for (int k = 0; k <= alpha; ++k) {
    const double log_coef = lg_alpha - std::lgamma(k + 1.0) -
                            std::lgamma(alpha - k + 1.0) + k * std::log(q) +
                            (alpha - k) * std::log1p(-q);
    const double s = log_coef + (static_cast<double>(k) * k - k) / (2.0 * sigma * sigma);
    log_a = log_add(log_a, s);
  }
  return log_a;
}

// log A_alpha for fractional alpha: the expectation is split at the point z0
// where the two mixture components cross and each half is expanded in a
// (generalized) binomial series with Gaussian tail factors.
inline double log_a_fractional(double q, double sigma, double alpha) {
  double log_a0 = kNegInf;
  double log_a1 = kNegInf;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  double log_abs_coef = 0.0;  // |C(alpha, 0)|
  bool positive = true;
  for (int i = 0; i < 100000; ++i) {
    const double j = alpha - i;
    const double log_t0 = log_abs_coef + i * std::log(q) + j * std::log1p(-q);
    const double log_t1 = log_abs_coef + j * std::log(q) + i * std::log1p(-q);
    const double log_e0 =
        std::log(0.5) + log_erfc((i - z0) / (std::numbers::sqrt2 * sigma));
    const double log_e1 =
        std::log(0.5) + log_erfc((z0 - j) / (std::numbers::sqrt2 * sigma));
    const double log_s0 =
        log_t0 + (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
    if (positive) {
      log_a0 = log_add(log_a0, log_s0);
      log_a1 = log_add(log_a1, log_s1);
    } else {
      log_a0 = log_sub(log_a0, log_s0);
      log_a1 = log_sub(log_a1, log_s1);
    }
    if (std::max(log_s0, log_s1) < -30.0) break;
    // C(alpha, i+1) = C(alpha, i) * (alpha - i) / (i + 1)
    const double ratio = (alpha - i) / (i + 1.0);
    if (ratio == 0.0) break;
    if (ratio < 0.0) positive = !positive;
    log_abs_coef += std::log(std::abs(ratio));
  }
  return log_add(log_a0, log_a1);
}

}  // namespace internal

// Default Renyi orders, 1.25 up to 64.
inline std::vector<double> default_rdp_orders() {
  std::vector<double> orders;
  // Halving this spacing moves the minimum by well under 1% for the
  // (q, sigma, T) ranges used here.
  for (int k = 1; k <= 12; ++k) orders.push_back(1.0 + k / 4.0);  // 1.25 .. 4
  for (int k = 1; k <= 12; ++k) orders.push_back(4.0 + k / 2.0);  // 4.5 .. 10
  for (int a = 11; a <= 20; ++a) orders.push_back(a);
  for (int a = 22; a <= 32; a += 2) orders.push_back(a);
  for (int a = 36; a <= 64; a += 4) orders.push_back(a);
  return orders;
}

// Per-step Renyi DP of the Poisson-subsampled Gaussian mechanism with sampling
// rate q and noise multiplier sigma, at order alpha.
inline double rdp_subsampled_gaussian(double q, double sigma, double alpha) {
  require(q >= 0.0 && q <= 1.0, "rdp: q must be in [0, 1]");
  require(sigma >= 0.0, "rdp: sigma must be >= 0");
  require(alpha > 1.0, "rdp: order must be > 1");
  if (q == 0.0) return 0.0;
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  if (q == 1.0) return alpha / (2.0 * sigma * sigma);
  if (!std::isfinite(alpha)) return std::numeric_limits<double>::infinity();
  const double log_a = (alpha == std::floor(alpha) && alpha < 1e6)
                           ? internal::log_a_integer(q, sigma, static_cast<int>(alpha))
                           : internal::log_a_fractional(q, sigma, alpha);
  return std::max(0.0, log_a / (alpha - 1.0));
}

struct AccountantState {
  std::vector<double> orders;
  std::vector<double> rdp_per_step;  // one mechanism step, per order
  std::vector<double> rdp_ledger;    // cumulative, per order
  int64_t rounds = 0;
};

struct PrivacySpend {
  double epsilon_hat = 0.0;
  double delta = 0.0;
  int64_t rounds = 0;
  double best_order = 0.0;  // order attaining the minimum (0 when rounds == 0)
};

// Ledger advanced by `steps` more identical steps, then converted to
// (epsilon, delta): epsilon = min_alpha (rdp_total(alpha) + ln(1/delta) / (alpha - 1)).
inline PrivacySpend compose_and_convert(const AccountantState& state,
                                        int64_t steps, double delta) {
  require(steps >= 0, "compose_and_convert: steps must be >= 0");
  require(delta > 0.0 && delta < 1.0, "compose_and_convert: delta in (0, 1)");
  PrivacySpend spend{0.0, delta, state.rounds + steps, 0.0};
  if (spend.rounds == 0) return spend;
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < state.orders.size(); ++i) {
    const double total =
        state.rdp_ledger[i] + static_cast<double>(steps) * state.rdp_per_step[i];
    const double eps = total + std::log(1.0 / delta) / (state.orders[i] - 1.0);
    if (eps < best) {
      best = eps;
      spend.best_order = state.orders[i];
    }
  }
  spend.epsilon_hat = std::max(0.0, best);
  return spend;
}

inline bool budget_exceeded(const PrivacySpend& spend, double target_epsilon) {
  return spend.epsilon_hat > target_epsilon;
}

// Moments accountant for a fixed (q, sigma) mechanism charged once per round.
class RdpAccountant {
 public:
  RdpAccountant(double q, double sigma,
                std::vector<double> orders = default_rdp_orders()) {
    require(q > 0.0 && q <= 1.0, "accountant: q must be in (0, 1]");
    require(sigma > 0.0, "accountant: sigma must be > 0");
    require(!orders.empty(), "accountant: empty order grid");
    for (double a : orders) require(a > 1.0, "accountant: orders must exceed 1");
    state_.orders = std::move(orders);
    for (double a : state_.orders) {
      state_.rdp_per_step.push_back(rdp_subsampled_gaussian(q, sigma, a));
    }
    state_.rdp_ledger.assign(state_.orders.size(), 0.0);
  }

  void step(int64_t n = 1) {
    require(n >= 0, "accountant: negative step count");
    for (size_t i = 0; i < state_.orders.size(); ++i) {
      state_.rdp_ledger[i] += static_cast<double>(n) * state_.rdp_per_step[i];
    }
    state_.rounds += n;
  }

  PrivacySpend spend(double delta) const { return compose_and_convert(state_, 0, delta); }

  // Spend after `extra` further steps, without charging them.
  PrivacySpend peek(int64_t extra, double delta) const {
    return compose_and_convert(state_, extra, delta);
  }

  const AccountantState& state() const { return state_; }
  int64_t rounds() const { return state_.rounds; }

 private:
  AccountantState state_;
};

// Basic sequential composition for the per-round calibration mode: each
// round is (epsilon_round, delta_round)-DP and both add up.
class SimpleCompositionAccountant {
 public:
  SimpleCompositionAccountant(double epsilon_round, double delta_round)
      : epsilon_round_(epsilon_round), delta_round_(delta_round) {
    require(epsilon_round > 0.0 && delta_round > 0.0,
            "composition: per-round bounds must be positive");
  }

  void step(int64_t n = 1) { rounds_ += n; }
  PrivacySpend peek(int64_t extra) const {
    const auto t = static_cast<double>(rounds_ + extra);
    return {t * epsilon_round_, t * delta_round_, rounds_ + extra, 0.0};
  }
  PrivacySpend spend() const { return peek(0); }
  int64_t rounds() const { return rounds_; }

 private:
  double epsilon_round_;
  double delta_round_;
  int64_t rounds_ = 0;
};

}  // namespace dpfl

#endif  // DPFL_ACCOUNTING_RDP_ACCOUNTANT_HPP_
