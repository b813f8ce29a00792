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

#ifndef DPFL_HE_NTT_HPP_
#define DPFL_HE_NTT_HPP_

#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "dpfl/common/error.hpp"
#include "dpfl/he/modarith.hpp"

namespace dpfl::he {

// Negacyclic number-theoretic transform over Z_p[x]/(x^n + 1). Forward output
// is the evaluation at the odd powers of a primitive 2n-th root psi, in
// bit-reversed order; pointwise products in that domain are products in the
// ring.
class NttTables {
 public:
  NttTables(size_t n, uint64_t p) : n_(n), p_(p) {
    require(n >= 2 && std::has_single_bit(n), "ntt: degree must be a power of two");
    require(p < (uint64_t{1} << 62), "ntt: modulus too large");
    require(is_prime(p) && (p - 1) % (2 * n) == 0, "ntt: modulus must be a prime = 1 mod 2n");
    psi_ = primitive_root_2n(n, p);
    const uint64_t psi_inv = inv_mod(psi_, p);
    const int log_n = std::countr_zero(n);
    psi_rev_.resize(n);
    psi_inv_rev_.resize(n);
    uint64_t pw = 1;
    uint64_t pw_inv = 1;
    std::vector<uint64_t> powers(n), inv_powers(n);
    for (size_t i = 0; i < n; ++i) {
      powers[i] = pw;
      inv_powers[i] = pw_inv;
      pw = mul_mod(pw, psi_, p);
      pw_inv = mul_mod(pw_inv, psi_inv, p);
    }
    for (size_t i = 0; i < n; ++i) {
      const size_t r = bit_reverse(i, log_n);
      psi_rev_[i] = ShoupConstant(powers[r], p);
      psi_inv_rev_[i] = ShoupConstant(inv_powers[r], p);
    }
    n_inv_ = ShoupConstant(inv_mod(n % p, p), p);
  }

  size_t degree() const { return n_; }
  uint64_t modulus() const { return p_; }
  uint64_t psi() const { return psi_; }

  // In place; inputs must already be reduced mod p.
  void forward(std::span<uint64_t> a) const {
    require(a.size() == n_, "ntt: length mismatch");
    const uint64_t p = p_;
    size_t t = n_;
    for (size_t m = 1; m < n_; m <<= 1) {
      t >>= 1;
      for (size_t i = 0; i < m; ++i) {
        const size_t j1 = 2 * i * t;
        const ShoupConstant& s = psi_rev_[m + i];
        for (size_t j = j1; j < j1 + t; ++j) {
          const uint64_t u = a[j];
          const uint64_t v = s.mul(a[j + t], p);
          a[j] = add_mod(u, v, p);
          a[j + t] = sub_mod(u, v, p);
        }
      }
    }
  }

  void inverse(std::span<uint64_t> a) const {
    require(a.size() == n_, "ntt: length mismatch");
    const uint64_t p = p_;
    size_t t = 1;
    for (size_t m = n_; m > 1; m >>= 1) {
      size_t j1 = 0;
      const size_t h = m >> 1;
      for (size_t i = 0; i < h; ++i) {
        const ShoupConstant& s = psi_inv_rev_[h + i];
        for (size_t j = j1; j < j1 + t; ++j) {
          const uint64_t u = a[j];
          const uint64_t v = a[j + t];
          a[j] = add_mod(u, v, p);
          a[j + t] = s.mul(sub_mod(u, v, p), p);
        }
        j1 += 2 * t;
      }
      t <<= 1;
    }
    for (auto& x : a) x = n_inv_.mul(x, p);
  }

  // Product in Z_p[x]/(x^n + 1).
  std::vector<uint64_t> multiply(std::vector<uint64_t> a, std::vector<uint64_t> b) const {
    forward(a);
    forward(b);
    for (size_t i = 0; i < n_; ++i) a[i] = mul_mod(a[i], b[i], p_);
    inverse(a);
    return a;
  }

 private:
  static size_t bit_reverse(size_t x, int bits) {
    size_t r = 0;
    for (int i = 0; i < bits; ++i) {
      r = (r << 1) | (x & 1);
      x >>= 1;
    }
    return r;
  }

  size_t n_;
  uint64_t p_;
  uint64_t psi_ = 0;
  std::vector<ShoupConstant> psi_rev_;
  std::vector<ShoupConstant> psi_inv_rev_;
  ShoupConstant n_inv_;
};

}  // namespace dpfl::he

#endif  // DPFL_HE_NTT_HPP_
