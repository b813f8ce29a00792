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
#include <vector>

#include "dpfl/accounting/rdp_accountant.hpp"
#include "oracles.hpp"

namespace dpfl {
namespace {

TEST(RdpTest, FullBatchIsAnalyticGaussian) {
  EXPECT_DOUBLE_EQ(rdp_subsampled_gaussian(1.0, 2.0, 8.0), 1.0);
  for (double a : default_rdp_orders()) {
    EXPECT_DOUBLE_EQ(rdp_subsampled_gaussian(1.0, 1.3, a), a / (2 * 1.3 * 1.3));
  }
}

TEST(RdpTest, VanishesAsSamplingRateVanishes) {
  double prev = rdp_subsampled_gaussian(0.1, 1.0, 8.0);
  for (double q : {1e-2, 1e-3, 1e-4, 1e-6}) {
    const double v = rdp_subsampled_gaussian(q, 1.0, 8.0);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-9);
  EXPECT_EQ(rdp_subsampled_gaussian(0.0, 1.0, 8.0), 0.0);
}

TEST(RdpTest, MatchesQuadratureOracle) {
  const double oracle_value = oracle::rdp_quadrature(0.01, 1.1, 16.0);
  const double v = rdp_subsampled_gaussian(0.01, 1.1, 16.0);
  EXPECT_NEAR(v, oracle_value, 1e-6 * oracle_value);
  // Frozen from the quadrature oracle.
  EXPECT_NEAR(v, 1.69982672775, 1e-6 * 1.69982672775);
}

TEST(RdpTest, FractionalOrdersMatchQuadrature) {
  for (double q : {0.01, 0.05, 0.3}) {
    for (double sigma : {0.8, 1.1, 3.0}) {
      for (double a : {1.25, 1.5, 2.75, 4.5}) {
        const double o = oracle::rdp_quadrature(q, sigma, a);
        EXPECT_NEAR(rdp_subsampled_gaussian(q, sigma, a), o, 1e-6 * o + 1e-12)
            << "q=" << q << " sigma=" << sigma << " alpha=" << a;
      }
    }
  }
}

TEST(RdpTest, RejectsBadParameters) {
  EXPECT_THROW(rdp_subsampled_gaussian(1.5, 1.0, 2.0), InvalidArgument);
  EXPECT_THROW(rdp_subsampled_gaussian(0.5, -1.0, 2.0), InvalidArgument);
  EXPECT_THROW(rdp_subsampled_gaussian(0.5, 1.0, 1.0), InvalidArgument);
  EXPECT_THROW(RdpAccountant(0.0, 1.0), InvalidArgument);
  EXPECT_THROW(RdpAccountant(0.5, 1.0, {0.5}), InvalidArgument);
}

TEST(AccountantTest, ZeroStepsIsZero) {
  RdpAccountant acc(0.1, 2.0);
  EXPECT_EQ(acc.spend(1e-4).epsilon_hat, 0.0);
  EXPECT_EQ(acc.spend(1e-4).rounds, 0);
}

TEST(AccountantTest, MatchesOracleAtReferencePoint) {
  RdpAccountant acc(0.1, 2.0);
  acc.step(100);
  const double eps = acc.spend(1e-4).epsilon_hat;
  const double o = oracle::epsilon_quadrature(0.1, 2.0, 100, 1e-4, default_rdp_orders());
  EXPECT_NEAR(eps, o, 1e-3 * o);
  // Frozen oracle value.
  EXPECT_NEAR(eps, 2.67998455675, 1e-3 * 2.67998455675);
}

TEST(AccountantTest, PeekEqualsStepping) {
  RdpAccountant a(0.05, 1.5), b(0.05, 1.5);
  a.step(3);
  b.step(10);
  EXPECT_DOUBLE_EQ(a.peek(7, 1e-5).epsilon_hat, b.spend(1e-5).epsilon_hat);
  EXPECT_EQ(a.rounds(), 3);
}

TEST(AccountantTest, StrictlyIncreasingAndDoublingDominates) {
  RdpAccountant acc(0.02, 1.2);
  double prev = 0.0;
  for (int t = 1; t <= 300; ++t) {
    acc.step();
    const double e = acc.spend(1e-5).epsilon_hat;
    EXPECT_GT(e, prev) << "t=" << t;
    EXPECT_GE(acc.peek(t, 1e-5).epsilon_hat, e);
    prev = e;
  }
  for (double v : acc.state().rdp_ledger) EXPECT_GE(v, 0.0);
}

TEST(AccountantTest, DenserOrderGridChangesLittle) {
  std::vector<double> dense;
  const auto base = default_rdp_orders();
  for (size_t i = 0; i < base.size(); ++i) {
    dense.push_back(base[i]);
    if (i + 1 < base.size()) dense.push_back(0.5 * (base[i] + base[i + 1]));
  }
  for (int t : {10, 100, 1000}) {
    RdpAccountant a(0.1, 2.0), b(0.1, 2.0, dense);
    a.step(t);
    b.step(t);
    const double ea = a.spend(1e-4).epsilon_hat, eb = b.spend(1e-4).epsilon_hat;
    EXPECT_LE(eb, ea);
    EXPECT_LT((ea - eb) / ea, 0.01) << "T=" << t;
  }
}

TEST(BudgetTest, Threshold) {
  EXPECT_FALSE(budget_exceeded({0.9, 1e-4, 1, 2.0}, 1.0));
  EXPECT_TRUE(budget_exceeded({1.1, 1e-4, 1, 2.0}, 1.0));
  EXPECT_FALSE(budget_exceeded({1.0, 1e-4, 1, 2.0}, 1.0));
}

// First round t* at which the budget is exceeded, found by scanning with the
// accountant, brackets the target when recomputed by the oracle.
TEST(BudgetTest, FirstExceedingRoundBracketsTarget) {
  const double q = 0.05, sigma = 1.0, delta = 1e-5, target = 4.0;
  RdpAccountant acc(q, sigma);
  int t_star = 0;
  for (int t = 1; t <= 10000; ++t) {
    acc.step();
    if (budget_exceeded(acc.spend(delta), target)) {
      t_star = t;
      break;
    }
  }
  ASSERT_GT(t_star, 10);
  const auto orders = default_rdp_orders();
  EXPECT_LE(oracle::epsilon_quadrature(q, sigma, t_star - 1, delta, orders), target * (1 + 1e-6));
  EXPECT_GT(oracle::epsilon_quadrature(q, sigma, t_star, delta, orders), target * (1 - 1e-6));
}

TEST(SimpleCompositionTest, AddsLinearly) {
  SimpleCompositionAccountant acc(0.1, 1e-6);
  acc.step(3);
  EXPECT_NEAR(acc.spend().epsilon_hat, 0.3, 1e-15);
  EXPECT_NEAR(acc.peek(2).delta, 5e-6, 1e-20);
}

}  // namespace
}  // namespace dpfl
