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

#ifndef DPFL_HE_ENCODING_HPP_
#define DPFL_HE_ENCODING_HPP_

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpfl/common/error.hpp"
#include "dpfl/he/bfv.hpp"

namespace dpfl::he {

// Packs up to d integers into one plaintext so that plaintext (and hence
// ciphertext) addition acts slot-wise. The slots are the evaluations of the
// plaintext polynomial at the primitive 2d-th roots of unity mod b; encoding
// interpolates through them with an inverse negacyclic NTT.
class BatchEncoder {
 public:
  explicit BatchEncoder(const BfvContext& ctx) : ctx_(&ctx) {}

  size_t slot_count() const { return ctx_->params().d; }
  int64_t slot_limit() const { return static_cast<int64_t>((ctx_->params().b - 1) / 2); }

  // Shorter inputs are zero-padded to d slots.
  PlaintextPoly encode(std::span<const int64_t> values) const {
    const auto& prm = ctx_->params();
    if (values.size() > prm.d) {
      throw InvalidArgument("batch_encode: " + std::to_string(values.size()) +
                            " values exceed " + std::to_string(prm.d) + " slots");
    }
    const int64_t lim = slot_limit();
    std::vector<uint64_t> a(prm.d, 0);
    for (size_t i = 0; i < values.size(); ++i) {
      if (values[i] < -lim || values[i] > lim) {
        throw InvalidArgument("batch_encode: slot " + std::to_string(i) + " value " +
                              std::to_string(values[i]) + " outside +-" +
                              std::to_string(lim));
      }
      a[i] = to_mod(values[i]);
    }
    ctx_->b_ntt().inverse(a);
    PlaintextPoly out{std::vector<int64_t>(prm.d)};
    for (size_t i = 0; i < prm.d; ++i) out.coefficients[i] = balanced(a[i]);
    return out;
  }

  // Returns all d slots as balanced residues.
  std::vector<int64_t> decode(const PlaintextPoly& plain) const {
    const auto& prm = ctx_->params();
    require(plain.coefficients.size() == prm.d, "batch_decode: wrong degree");
    std::vector<uint64_t> a(prm.d);
    for (size_t i = 0; i < prm.d; ++i) a[i] = to_mod(plain.coefficients[i]);
    ctx_->b_ntt().forward(a);
    std::vector<int64_t> out(prm.d);
    for (size_t i = 0; i < prm.d; ++i) out[i] = balanced(a[i]);
    return out;
  }

 private:
  uint64_t to_mod(int64_t v) const {
    const auto b = static_cast<int64_t>(ctx_->params().b);
    int64_t r = v % b;
    if (r < 0) r += b;
    return static_cast<uint64_t>(r);
  }
  int64_t balanced(uint64_t r) const {
    const auto b = static_cast<int64_t>(ctx_->params().b);
    const auto v = static_cast<int64_t>(r);
    return v > (b - 1) / 2 ? v - b : v;
  }

  const BfvContext* ctx_;
};

// Coefficient-wise sum of two plaintexts in R_b, balanced.
inline PlaintextPoly add_plain(const PlaintextPoly& x, const PlaintextPoly& y,
                               uint64_t b) {
  require(x.coefficients.size() == y.coefficients.size(), "add_plain: degree mismatch");
  const auto bb = static_cast<int64_t>(b);
  PlaintextPoly out{std::vector<int64_t>(x.coefficients.size())};
  for (size_t i = 0; i < out.coefficients.size(); ++i) {
    int64_t s = (x.coefficients[i] + y.coefficients[i]) % bb;
    if (s < 0) s += bb;
    out.coefficients[i] = s > (bb - 1) / 2 ? s - bb : s;
  }
  return out;
}

// Balanced base-b expansion of u, lowest power first. Digits lie in
// [-(b-1)/2, (b-1)/2] for odd b and [-b/2, b/2 - 1] for even b > 2. For b = 2
// digits are {0, 1}; a negative u is encoded as the negation of |u|'s
// expansion.
inline std::vector<int64_t> base_b_encode(int64_t u, uint64_t base) {
  require(base >= 2 && base <= (uint64_t{1} << 62), "base_b_encode: base must be >= 2");
  std::vector<int64_t> digits;
  if (base == 2 && u < 0) {
    require(u != INT64_MIN, "base_b_encode: value out of range");
    digits = base_b_encode(-u, 2);
    for (auto& dg : digits) dg = -dg;
    return digits;
  }
  const auto b = static_cast<__int128>(base);
  const __int128 hi = base == 2 ? 1 : (base % 2 ? (b - 1) / 2 : b / 2 - 1);
  __int128 x = u;
  while (x != 0) {
    __int128 r = x % b;
    if (r < 0) r += b;
    if (r > hi) r -= b;
    digits.push_back(static_cast<int64_t>(r));
    x = (x - r) / b;
  }
  return digits;
}

// Evaluates the digit polynomial at x = base (Horner).
inline int64_t base_b_decode(std::span<const int64_t> digits, uint64_t base) {
  require(base >= 2, "base_b_decode: base must be >= 2");
  __int128 acc = 0;
  for (size_t i = digits.size(); i-- > 0;) {
    acc = acc * static_cast<__int128>(base) + digits[i];
    if (acc > INT64_MAX || acc < INT64_MIN) {
      throw RangeError("base_b_decode: value exceeds 64 bits");
    }
  }
  return static_cast<int64_t>(acc);
}

// Fixed-point quantization used before encryption: integer =
// round-half-away-from-zero(w * scale). `max_parties` is the largest number of
// encoded values that will be summed in one slot; the codec refuses inputs
// whose aggregate could leave the balanced range of the plaintext modulus.
class FixedPointCodec {
 public:
  static constexpr double kDefaultScale = 1e3;

  FixedPointCodec(uint64_t plain_modulus, int max_parties, double scale = kDefaultScale)
      : scale_(scale),
        slot_limit_(static_cast<int64_t>((plain_modulus - 1) / 2)),
        max_parties_(max_parties) {
    require(max_parties >= 1, "fixed point: max_parties must be >= 1");
    require(scale > 0.0, "fixed point: scale must be > 0");
  }

  // Largest |w| that survives aggregation over max_parties: (b-1) / (2 scale K).
  double max_abs_value() const {
    return static_cast<double>(slot_limit_) / (scale_ * max_parties_);
  }

  int64_t encode(double w) const {
    if (!std::isfinite(w) || std::abs(w) > max_abs_value()) {
      throw RangeError("fixed point: value " + std::to_string(w) +
                       " exceeds the aggregation budget +-" +
                       std::to_string(max_abs_value()));
    }
    return static_cast<int64_t>(std::round(w * scale_));
  }

  double decode(int64_t v) const { return static_cast<double>(v) / scale_; }

  double scale() const { return scale_; }
  int max_parties() const { return max_parties_; }

 private:
  double scale_;
  int64_t slot_limit_;
  int max_parties_;
};

}  // namespace dpfl::he

#endif  // DPFL_HE_ENCODING_HPP_
