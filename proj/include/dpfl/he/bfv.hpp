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

// BFV public-key encryption over R_q = Z_q[x]/(x^d + 1), additive operations
// only.
//
// WARNING: this implementation is for simulation and study. It has not been
// audited, is not constant-time, and draws its randomness from a seeded
// non-cryptographic generator. Do not use it to protect real data.

#ifndef DPFL_HE_BFV_HPP_
#define DPFL_HE_BFV_HPP_

#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dpfl/common/bytes.hpp"
#include "dpfl/common/error.hpp"
#include "dpfl/common/random.hpp"
#include "dpfl/he/modarith.hpp"
#include "dpfl/he/ntt.hpp"

namespace dpfl::he {

// Largest prime below 2^60 that is 1 mod 8192 (= 2^60 - 2^14 + 1), found by
// find_ntt_prime(60, 4096).
inline constexpr uint64_t kDefaultCoeffModulus = 1152921504606830593ULL;
inline constexpr uint64_t kDefaultPlainModulus = 40961;  // 5 * 8192 + 1
inline constexpr size_t kDefaultDegree = 4096;
inline constexpr double kDefaultNoiseStd = 3.2;

struct EncryptionParams {
  size_t d = kDefaultDegree;           // polynomial modulus degree
  uint64_t b = kDefaultPlainModulus;   // plaintext modulus
  uint64_t qc = kDefaultCoeffModulus;  // coefficient modulus
  double noise_std = kDefaultNoiseStd; // error distribution width

  static EncryptionParams standard() { return {}; }

  // Tiny rings for brute-force checks: d in {8, 16}, b = 17 or 97, 30-bit qc.
  static EncryptionParams small_test(size_t degree) {
    require(degree == 8 || degree == 16, "small_test: degree must be 8 or 16");
    return {degree, degree == 8 ? 17u : 97u, find_ntt_prime(30, degree),
            kDefaultNoiseStd};
  }

  uint64_t delta_scale() const { return qc / b; }

  void validate() const {
    require(d >= 2 && std::has_single_bit(d), "bfv: d must be a power of two");
    require(b >= 3 && is_prime(b) && b % (2 * d) == 1,
            "bfv: b must be a prime = 1 mod 2d for batching");
    require(qc < (uint64_t{1} << 61) && is_prime(qc) && qc % (2 * d) == 1,
            "bfv: qc must be a prime = 1 mod 2d below 2^61");
    require(delta_scale() >= 2 * b, "bfv: qc too small relative to b");
    require(noise_std > 0.0 && std::isfinite(noise_std), "bfv: bad noise_std");
  }

  // FNV-1a over (d, b, qc, noise_std bits), little-endian u64 each.
  uint64_t hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (uint64_t v : {static_cast<uint64_t>(d), b, qc, std::bit_cast<uint64_t>(noise_std)}) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }

  bool operator==(const EncryptionParams&) const = default;
};

// Polynomial with coefficients in [0, qc).
using Poly = std::vector<uint64_t>;

// Plaintext in R_b with balanced coefficients in [-(b-1)/2, (b-1)/2].
struct PlaintextPoly {
  std::vector<int64_t> coefficients;
  bool operator==(const PlaintextPoly&) const = default;
};

struct SecretKey {
  Poly s;      // ternary, stored mod qc
  Poly s_ntt;  // cached transform
};

struct PublicKey {
  Poly p0;  // [-(a s + e)]_q
  Poly p1;  // a
  Poly p0_ntt;
  Poly p1_ntt;

  bool operator==(const PublicKey& o) const { return p0 == o.p0 && p1 == o.p1; }
};

struct Ciphertext {
  Poly c0;
  Poly c1;
  uint32_t level = 0;  // additions performed so far
  uint64_t params_hash = 0;

  bool operator==(const Ciphertext&) const = default;
};

struct KeyPair {
  SecretKey secret;
  PublicKey pub;
};

// Validated parameters plus the transform tables they need. Immutable and
// shareable across threads.
class BfvContext {
 public:
  explicit BfvContext(const EncryptionParams& params)
      : params_((params.validate(), params)),
        q_ntt_(params.d, params.qc),
        b_ntt_(params.d, params.b) {
    // Per-coefficient noise of a fresh ciphertext is -e*u + e1 + e2*s with
    // ternary u, s (2/3 non-zero), so its variance is
    // noise_std^2 * (1 + 4d/3). Six standard deviations.
    fresh_noise_bound_ = 6.0 * params_.noise_std *
                         std::sqrt(1.0 + 4.0 * static_cast<double>(params_.d) / 3.0);
    noise_limit_ = static_cast<double>(params_.qc) / (4.0 * static_cast<double>(params_.b));
    // Each addition whose plaintext sum wraps mod b leaves qc mod b behind.
    wrap_term_ = static_cast<double>(params_.qc % params_.b);
    const double cap =
        std::floor((noise_limit_ + wrap_term_) / (fresh_noise_bound_ + wrap_term_)) - 1.0;
    max_level_ = cap < 0 ? 0 : cap > 4e9 ? 4000000000u : static_cast<uint32_t>(cap);
  }

  static std::shared_ptr<const BfvContext> make(const EncryptionParams& params) {
    return std::make_shared<const BfvContext>(params);
  }

  const EncryptionParams& params() const { return params_; }
  const NttTables& q_ntt() const { return q_ntt_; }
  const NttTables& b_ntt() const { return b_ntt_; }
  uint64_t params_hash() const { return params_.hash(); }

  // High-probability bound on the decryption noise of a fresh ciphertext.
  double fresh_noise_bound() const { return fresh_noise_bound_; }
  // Decryption refuses ciphertexts whose noise reaches qc / (4b), half of the
  // true failure point qc / (2b).
  double noise_limit() const { return noise_limit_; }
  double wrap_term() const { return wrap_term_; }
  // Highest level for which
  //   (level + 1) * fresh_noise_bound + level * wrap_term < noise_limit.
  uint32_t max_level() const { return max_level_; }

 private:
  EncryptionParams params_;
  NttTables q_ntt_;
  NttTables b_ntt_;
  double fresh_noise_bound_ = 0.0;
  double noise_limit_ = 0.0;
  double wrap_term_ = 0.0;
  uint32_t max_level_ = 0;
};

namespace internal {

inline Poly sample_ternary(size_t d, uint64_t q, NoiseSource& rng) {
  Poly out(d);
  for (auto& c : out) {
    const uint64_t r = rng.uniform_below(3);
    c = r == 0 ? 0 : r == 1 ? 1 : q - 1;
  }
  return out;
}

// Rounded Gaussian, truncated at six standard deviations.
inline Poly sample_error(size_t d, uint64_t q, double stddev, NoiseSource& rng) {
  Poly out(d);
  const double bound = 6.0 * stddev;
  for (auto& c : out) {
    double x;
    do {
      x = std::round(rng.gaussian(stddev));
    } while (std::abs(x) > bound);
    const auto v = static_cast<int64_t>(x);
    c = v >= 0 ? static_cast<uint64_t>(v) : q - static_cast<uint64_t>(-v);
  }
  return out;
}

inline Poly sample_uniform(size_t d, uint64_t q, NoiseSource& rng) {
  Poly out(d);
  for (auto& c : out) c = rng.uniform_below(q);
  return out;
}

inline Poly to_ntt(const NttTables& t, Poly p) {
  t.forward(p);
  return p;
}

inline int64_t center(uint64_t x, uint64_t q) {
  return x > q / 2 ? -static_cast<int64_t>(q - x) : static_cast<int64_t>(x);
}

// c0 + c1 * s mod q.
inline Poly phase(const BfvContext& ctx, const Ciphertext& ct, const SecretKey& sk) {
  const uint64_t q = ctx.params().qc;
  Poly t = ct.c1;
  ctx.q_ntt().forward(t);
  for (size_t i = 0; i < t.size(); ++i) t[i] = mul_mod(t[i], sk.s_ntt[i], q);
  ctx.q_ntt().inverse(t);
  for (size_t i = 0; i < t.size(); ++i) t[i] = add_mod(t[i], ct.c0[i], q);
  return t;
}

}  // namespace internal

inline SecretKey make_secret_key(const BfvContext& ctx, Poly s) {
  require(s.size() == ctx.params().d, "secret key: wrong degree");
  SecretKey sk{std::move(s), {}};
  sk.s_ntt = internal::to_ntt(ctx.q_ntt(), sk.s);
  return sk;
}

inline PublicKey make_public_key(const BfvContext& ctx, Poly p0, Poly p1) {
  const auto& prm = ctx.params();
  require(p0.size() == prm.d && p1.size() == prm.d, "public key: wrong degree");
  for (size_t i = 0; i < prm.d; ++i) {
    require(p0[i] < prm.qc && p1[i] < prm.qc, "public key: coefficient out of range");
  }
  PublicKey pk{std::move(p0), std::move(p1), {}, {}};
  pk.p0_ntt = internal::to_ntt(ctx.q_ntt(), pk.p0);
  pk.p1_ntt = internal::to_ntt(ctx.q_ntt(), pk.p1);
  return pk;
}

// s <- ternary; a <- R_q; e <- chi; pk = ([-(a s + e)]_q, a).
inline KeyPair keygen(const BfvContext& ctx, NoiseSource& rng) {
  const auto& prm = ctx.params();
  const uint64_t q = prm.qc;
  SecretKey sk = make_secret_key(ctx, internal::sample_ternary(prm.d, q, rng));
  Poly a = internal::sample_uniform(prm.d, q, rng);
  const Poly e = internal::sample_error(prm.d, q, prm.noise_std, rng);
  Poly as = internal::to_ntt(ctx.q_ntt(), a);
  for (size_t i = 0; i < prm.d; ++i) as[i] = mul_mod(as[i], sk.s_ntt[i], q);
  ctx.q_ntt().inverse(as);
  Poly p0(prm.d);
  for (size_t i = 0; i < prm.d; ++i) p0[i] = sub_mod(0, add_mod(as[i], e[i], q), q);
  return {std::move(sk), make_public_key(ctx, std::move(p0), std::move(a))};
}

inline void check_plaintext(const BfvContext& ctx, const PlaintextPoly& m) {
  const auto& prm = ctx.params();
  if (m.coefficients.size() != prm.d) {
    throw InvalidArgument("plaintext must have exactly d coefficients");
  }
  const auto half = static_cast<int64_t>((prm.b - 1) / 2);
  for (size_t i = 0; i < prm.d; ++i) {
    if (m.coefficients[i] < -half || m.coefficients[i] > half) {
      throw InvalidArgument("plaintext coefficient " + std::to_string(i) +
                            " outside the balanced range of b");
    }
  }
}

// ct = ([p0 u + e1 + Delta m]_q, [p1 u + e2]_q) with u ternary and e1, e2 <- chi.
inline Ciphertext encrypt(const BfvContext& ctx, const PlaintextPoly& m,
                          const PublicKey& pk, NoiseSource& rng) {
  check_plaintext(ctx, m);
  const auto& prm = ctx.params();
  const uint64_t q = prm.qc;
  const uint64_t delta = prm.delta_scale();
  const Poly u_ntt = internal::to_ntt(ctx.q_ntt(), internal::sample_ternary(prm.d, q, rng));
  const Poly e1 = internal::sample_error(prm.d, q, prm.noise_std, rng);
  const Poly e2 = internal::sample_error(prm.d, q, prm.noise_std, rng);
  Ciphertext ct{Poly(prm.d), Poly(prm.d), 0, ctx.params_hash()};
  for (size_t i = 0; i < prm.d; ++i) {
    ct.c0[i] = mul_mod(pk.p0_ntt[i], u_ntt[i], q);
    ct.c1[i] = mul_mod(pk.p1_ntt[i], u_ntt[i], q);
  }
  ctx.q_ntt().inverse(ct.c0);
  ctx.q_ntt().inverse(ct.c1);
  for (size_t i = 0; i < prm.d; ++i) {
    const int64_t mi = m.coefficients[i];
    const uint64_t dm = mi >= 0 ? mul_mod(delta, static_cast<uint64_t>(mi), q)
                                : sub_mod(0, mul_mod(delta, static_cast<uint64_t>(-mi), q), q);
    ct.c0[i] = add_mod(add_mod(ct.c0[i], e1[i], q), dm, q);
    ct.c1[i] = add_mod(ct.c1[i], e2[i], q);
  }
  return ct;
}

namespace internal {

struct DecryptResult {
  PlaintextPoly plain;
  uint64_t noise = 0;  // infinity norm of the centred phase residual
};

inline DecryptResult decrypt_with_noise(const BfvContext& ctx, const Ciphertext& ct,
                                        const SecretKey& sk) {
  const auto& prm = ctx.params();
  if (ct.params_hash != ctx.params_hash() || ct.c0.size() != prm.d ||
      ct.c1.size() != prm.d) {
    throw InvalidArgument("decrypt: ciphertext does not match parameters");
  }
  const uint64_t q = prm.qc;
  const uint64_t b = prm.b;
  const uint64_t delta = prm.delta_scale();
  const Poly x = phase(ctx, ct, sk);
  DecryptResult out{{std::vector<int64_t>(prm.d)}, 0};
  const auto half_b = static_cast<int64_t>((b - 1) / 2);
  for (size_t i = 0; i < prm.d; ++i) {
    // round(b * x / q) mod b
    const u128 num = static_cast<u128>(x[i]) * b + q / 2;
    const auto m = static_cast<uint64_t>((num / q) % b);
    const auto mm = static_cast<int64_t>(m);
    const int64_t balanced = mm > half_b ? mm - static_cast<int64_t>(b) : mm;
    // Residual against Delta * m with m balanced, the convention encrypt uses.
    const uint64_t dm = balanced >= 0
                            ? mul_mod(delta, static_cast<uint64_t>(balanced), q)
                            : sub_mod(0, mul_mod(delta, static_cast<uint64_t>(-balanced), q), q);
    const int64_t noise = center(sub_mod(x[i], dm, q), q);
    out.noise = std::max<uint64_t>(out.noise, static_cast<uint64_t>(noise < 0 ? -noise : noise));
    out.plain.coefficients[i] = balanced;
  }
  return out;
}

}  // namespace internal

// [[ b [c0 + c1 s]_q / q ]]_b, balanced. Throws DecryptionFailure when the
// residual noise is past the safety margin.
inline PlaintextPoly decrypt(const BfvContext& ctx, const Ciphertext& ct,
                             const SecretKey& sk) {
  auto r = internal::decrypt_with_noise(ctx, ct, sk);
  if (static_cast<double>(r.noise) >= ctx.noise_limit()) {
    throw DecryptionFailure("ciphertext noise " + std::to_string(r.noise) +
                            " exceeds the decryption margin");
  }
  return std::move(r.plain);
}

// ||c0 + c1 s - Delta m||_inf for the decoded m.
inline uint64_t decryption_noise(const BfvContext& ctx, const Ciphertext& ct,
                                 const SecretKey& sk) {
  return internal::decrypt_with_noise(ctx, ct, sk).noise;
}

inline Ciphertext add_ciphertexts(const BfvContext& ctx, const Ciphertext& a,
                                  const Ciphertext& b) {
  const auto& prm = ctx.params();
  if (a.params_hash != b.params_hash || a.params_hash != ctx.params_hash() ||
      a.c0.size() != prm.d || b.c0.size() != prm.d) {
    throw InvalidArgument("add_ciphertexts: parameter mismatch");
  }
  const uint64_t level = uint64_t{a.level} + b.level + 1;
  if (level > ctx.max_level()) {
    throw RangeError("add_ciphertexts: level " + std::to_string(level) +
                     " exceeds the noise budget cap " + std::to_string(ctx.max_level()));
  }
  const uint64_t q = prm.qc;
  Ciphertext out{Poly(prm.d), Poly(prm.d), static_cast<uint32_t>(level), a.params_hash};
  for (size_t i = 0; i < prm.d; ++i) {
    out.c0[i] = add_mod(a.c0[i], b.c0[i], q);
    out.c1[i] = add_mod(a.c1[i], b.c1[i], q);
  }
  return out;
}

// Wire form: params hash (u64), level (u32), then c0 and c1 as d u64 each,
// all little-endian.
inline void write_ciphertext(ByteWriter& w, const Ciphertext& ct) {
  w.u64(ct.params_hash);
  w.u32(ct.level);
  for (uint64_t c : ct.c0) w.u64(c);
  for (uint64_t c : ct.c1) w.u64(c);
}

inline std::vector<uint8_t> serialize_ciphertext(const Ciphertext& ct) {
  ByteWriter w;
  write_ciphertext(w, ct);
  return std::move(w).take();
}

inline Ciphertext read_ciphertext(ByteReader& r, const BfvContext& ctx) {
  const auto& prm = ctx.params();
  Ciphertext ct;
  ct.params_hash = r.u64();
  if (ct.params_hash != ctx.params_hash()) {
    throw ProtocolError("ciphertext parameter hash mismatch");
  }
  ct.level = r.u32();
  ct.c0.resize(prm.d);
  ct.c1.resize(prm.d);
  for (auto& c : ct.c0) c = r.u64();
  for (auto& c : ct.c1) c = r.u64();
  for (size_t i = 0; i < prm.d; ++i) {
    if (ct.c0[i] >= prm.qc || ct.c1[i] >= prm.qc) {
      throw ProtocolError("ciphertext coefficient out of range");
    }
  }
  return ct;
}

inline Ciphertext deserialize_ciphertext(std::span<const uint8_t> bytes,
                                         const BfvContext& ctx) {
  ByteReader r(bytes);
  Ciphertext ct = read_ciphertext(r, ctx);
  if (!r.done()) throw ProtocolError("trailing bytes after ciphertext");
  return ct;
}

// Parameters and public key. Layout: d (u32), b (u64), qc (u64),
// noise_std (f64), p0 and p1 as d u64 each.
inline void write_public_key(ByteWriter& w, const EncryptionParams& prm,
                             const PublicKey& pk) {
  w.u32(static_cast<uint32_t>(prm.d));
  w.u64(prm.b);
  w.u64(prm.qc);
  w.f64(prm.noise_std);
  for (uint64_t c : pk.p0) w.u64(c);
  for (uint64_t c : pk.p1) w.u64(c);
}

inline EncryptionParams read_params(ByteReader& r) {
  EncryptionParams prm;
  prm.d = r.u32();
  prm.b = r.u64();
  prm.qc = r.u64();
  prm.noise_std = r.f64();
  try {
    prm.validate();
  } catch (const InvalidArgument& e) {
    throw ProtocolError("bad encryption parameters on the wire: " + e.detail());
  }
  return prm;
}

inline PublicKey read_public_key(ByteReader& r, const BfvContext& ctx) {
  const size_t d = ctx.params().d;
  Poly p0(d), p1(d);
  for (auto& c : p0) c = r.u64();
  for (auto& c : p1) c = r.u64();
  try {
    return make_public_key(ctx, std::move(p0), std::move(p1));
  } catch (const InvalidArgument& e) {
    throw ProtocolError(e.detail());
  }
}

inline std::vector<uint8_t> serialize_secret_key(const SecretKey& sk) {
  ByteWriter w;
  for (uint64_t c : sk.s) w.u64(c);
  return std::move(w).take();
}

}  // namespace dpfl::he

#endif  // DPFL_HE_BFV_HPP_
