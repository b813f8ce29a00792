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

#ifndef DPFL_COMMON_RANDOM_HPP_
#define DPFL_COMMON_RANDOM_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace dpfl {

namespace internal {

// SplitMix64 finalizer.
constexpr uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace internal

// Counter-based pseudo-random stream. The i-th output is a pure function of
// (seed, stream, i), so streams can be replayed or forked without sharing
// state. Not a cryptographic generator.
//
// Satisfies UniformRandomBitGenerator so it can drive <algorithm> shuffles.
class NoiseSource {
 public:
  using result_type = uint64_t;

  NoiseSource(uint64_t seed, uint64_t stream)
      : key_(internal::mix64(internal::mix64(seed ^ 0x6a09e667f3bcc909ULL) ^
                             (stream * 0x9e3779b97f4a7c15ULL + 0x3c6ef372fe94f82bULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() { return next_u64(); }

  uint64_t next_u64() {
    return internal::mix64(key_ + (counter_++) * 0xd1b54a32d192ed03ULL);
  }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  uint64_t uniform_below(uint64_t bound) {
    if (bound <= 1) return 0;
    const uint64_t limit = max() - max() % bound;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via the Box-Muller transform; the second variate of each
  // pair is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double gaussian(double stddev) { return stddev * gaussian(); }

  uint64_t counter() const { return counter_; }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dpfl

#endif  // DPFL_COMMON_RANDOM_HPP_
