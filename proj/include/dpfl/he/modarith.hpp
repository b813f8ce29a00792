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

#ifndef DPFL_HE_MODARITH_HPP_
#define DPFL_HE_MODARITH_HPP_

#include <cstdint>
#include <vector>

#include "dpfl/common/error.hpp"

namespace dpfl::he {

using u128 = unsigned __int128;

inline uint64_t mul_mod(uint64_t a, uint64_t b, uint64_t m) {
  return static_cast<uint64_t>(static_cast<u128>(a) * b % m);
}

inline uint64_t add_mod(uint64_t a, uint64_t b, uint64_t m) {
  const uint64_t s = a + b;
  return s >= m ? s - m : s;
}

inline uint64_t sub_mod(uint64_t a, uint64_t b, uint64_t m) {
  return a >= b ? a - b : a + m - b;
}

inline uint64_t pow_mod(uint64_t base, uint64_t exp, uint64_t m) {
  uint64_t result = 1 % m;
  base %= m;
  while (exp) {
    if (exp & 1) result = mul_mod(result, base, m);
    base = mul_mod(base, base, m);
    exp >>= 1;
  }
  return result;
}

// Inverse modulo a prime.
inline uint64_t inv_mod(uint64_t a, uint64_t prime) {
  require(a % prime != 0, "inv_mod: zero has no inverse");
  return pow_mod(a, prime - 2, prime);
}

// Deterministic Miller-Rabin; these bases are exact for all 64-bit n.
inline bool is_prime(uint64_t n) {
  if (n < 2) return false;
  for (uint64_t p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL,
                     29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  uint64_t d = n - 1;
  int r = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++r;
  }
  for (uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL,
                     29ULL, 31ULL, 37ULL}) {
    uint64_t x = pow_mod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < r; ++i) {
      x = mul_mod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

// Largest prime p <= 2^bits with p = 1 (mod 2 * degree).
inline uint64_t find_ntt_prime(int bits, uint64_t degree) {
  require(bits >= 4 && bits <= 62, "find_ntt_prime: bits out of range");
  const uint64_t step = 2 * degree;
  uint64_t p = ((uint64_t{1} << bits) / step) * step + 1;
  if (p > (uint64_t{1} << bits)) p -= step;
  for (; p > step; p -= step) {
    if (is_prime(p)) return p;
  }
  throw InvalidArgument("find_ntt_prime: no prime found");
}

// A primitive (2 * degree)-th root of unity modulo prime p (needs p = 1 mod
// 2 * degree). Smallest candidate generator wins, so the result is
// deterministic.
inline uint64_t primitive_root_2n(uint64_t degree, uint64_t p) {
  const uint64_t order = 2 * degree;
  require((p - 1) % order == 0, "primitive_root_2n: p != 1 mod 2n");
  for (uint64_t g = 2; g < p; ++g) {
    const uint64_t psi = pow_mod(g, (p - 1) / order, p);
    // order divides 2n exactly iff psi^n = -1.
    if (pow_mod(psi, degree, p) == p - 1) return psi;
  }
  throw InvalidArgument("primitive_root_2n: none found");
}

// Multiplication by a fixed operand w with precomputed floor(w * 2^64 / p)
// (Shoup). Valid for p < 2^63.
struct ShoupConstant {
  uint64_t value = 0;
  uint64_t quotient = 0;

  ShoupConstant() = default;
  ShoupConstant(uint64_t w, uint64_t p)
      : value(w), quotient(static_cast<uint64_t>((static_cast<u128>(w) << 64) / p)) {}

  uint64_t mul(uint64_t a, uint64_t p) const {
    const auto hi = static_cast<uint64_t>((static_cast<u128>(a) * quotient) >> 64);
    const uint64_t r = a * value - hi * p;
    return r >= p ? r - p : r;
  }
};

}  // namespace dpfl::he

#endif  // DPFL_HE_MODARITH_HPP_
