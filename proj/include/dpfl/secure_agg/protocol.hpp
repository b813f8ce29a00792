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

// Encrypted model averaging between one server and K hospitals:
//   1. hospital 1 generates keys; the public key goes to everyone over the
//      transport, the secret key only to hospitals (out of band);
//   2. the server broadcasts the initial model;
//   3. hospitals train locally (outside this module);
//   4. each active hospital quantizes, chunks, encrypts and sends its model;
//   5. the server adds the ciphertexts and returns the encrypted sum;
//   6. hospitals decrypt, rescale and divide by the number of active
//      hospitals.
// The server side of this file never receives or stores a secret key.

#ifndef DPFL_SECURE_AGG_PROTOCOL_HPP_
#define DPFL_SECURE_AGG_PROTOCOL_HPP_

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpfl/common/bytes.hpp"
#include "dpfl/common/error.hpp"
#include "dpfl/common/random.hpp"
#include "dpfl/he/bfv.hpp"
#include "dpfl/he/encoding.hpp"
#include "dpfl/model/model.hpp"
#include "dpfl/secure_agg/transport.hpp"
#include "dpfl/secure_agg/wire.hpp"

namespace dpfl::secagg {

struct FlatModel {
  std::vector<int64_t> values;
  std::vector<LayerShape> shape;
};

// Fixed-point quantization of every weight. Throws RangeError naming the
// first coordinate outside the codec's aggregation budget.
inline FlatModel flatten(const ModelParams& model, const he::FixedPointCodec& codec) {
  FlatModel out{std::vector<int64_t>(model.values.size()), model.shape};
  for (size_t i = 0; i < model.values.size(); ++i) {
    try {
      out.values[i] = codec.encode(model.values[i]);
    } catch (const RangeError& e) {
      throw RangeError("coordinate " + std::to_string(i) + ": " + e.detail());
    }
  }
  return out;
}

inline ModelParams unflatten(std::span<const int64_t> values,
                             const std::vector<LayerShape>& shape,
                             const he::FixedPointCodec& codec, double divisor = 1.0) {
  ModelParams m;
  m.shape = shape;
  m.values.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i) m.values[i] = codec.decode(values[i]) / divisor;
  m.validate();
  return m;
}

inline ChunkedUpdate encrypt_update(std::span<const int64_t> flat, const he::PublicKey& pk,
                                    const he::BfvContext& ctx, NoiseSource& rng) {
  const size_t d = ctx.params().d;
  const he::BatchEncoder encoder(ctx);
  ChunkedUpdate out;
  out.original_len = flat.size();
  for (size_t begin = 0; begin < flat.size(); begin += d) {
    const size_t len = std::min(d, flat.size() - begin);
    he::PlaintextPoly plain;
    try {
      plain = encoder.encode(flat.subspan(begin, len));
    } catch (const InvalidArgument& e) {
      throw RangeError("encrypt_update: " + e.detail());
    }
    out.chunks.push_back(he::encrypt(ctx, plain, pk, rng));
  }
  return out;
}

// Chunk-wise homomorphic sum in the given order. Needs no key material.
inline ChunkedUpdate aggregate_at_server(std::span<const ChunkedUpdate> updates,
                                         const he::BfvContext& ctx) {
  if (updates.empty()) throw ProtocolError("aggregate_at_server: no updates");
  ChunkedUpdate sum = updates.front();
  for (size_t k = 1; k < updates.size(); ++k) {
    const auto& u = updates[k];
    if (u.original_len != sum.original_len || u.num_chunks() != sum.num_chunks()) {
      throw ProtocolError("aggregate_at_server: update shapes differ");
    }
    for (size_t c = 0; c < sum.chunks.size(); ++c) {
      try {
        sum.chunks[c] = he::add_ciphertexts(ctx, sum.chunks[c], u.chunks[c]);
      } catch (const InvalidArgument& e) {
        throw ProtocolError("aggregate_at_server: " + e.detail());
      }
    }
  }
  return sum;
}

// Decrypts every chunk and returns the first original_len slots.
inline std::vector<int64_t> decrypt_slots(const ChunkedUpdate& agg, const he::SecretKey& sk,
                                          const he::BfvContext& ctx) {
  const he::BatchEncoder encoder(ctx);
  std::vector<int64_t> out;
  out.reserve(agg.num_chunks() * ctx.params().d);
  for (const auto& ct : agg.chunks) {
    const auto slots = encoder.decode(he::decrypt(ctx, ct, sk));
    out.insert(out.end(), slots.begin(), slots.end());
  }
  if (out.size() < agg.original_len) throw ProtocolError("aggregate shorter than declared");
  out.resize(agg.original_len);
  return out;
}

inline ModelParams decrypt_aggregate(const ChunkedUpdate& agg, const he::SecretKey& sk,
                                     const he::BfvContext& ctx, int active_count,
                                     const std::vector<LayerShape>& shape,
                                     const he::FixedPointCodec& codec) {
  require(active_count >= 1, "decrypt_aggregate: active_count must be >= 1");
  const auto slots = decrypt_slots(agg, sk, ctx);
  return unflatten(slots, shape, codec, static_cast<double>(active_count));
}

// Secret key material handed from hospital 1 to the other hospitals. It has
// no wire encoding, so it cannot be sent through a Transport.
struct HospitalKeyShare {
  he::EncryptionParams params;
  he::SecretKey secret;
};

struct ProtocolOptions {
  std::chrono::milliseconds timeout{30000};
  // Largest number of models summed in one aggregate; bounds |w|.
  int max_parties = 10;
  double fixed_point_scale = he::FixedPointCodec::kDefaultScale;
};

class ServerNode {
 public:
  ServerNode(Transport& transport, size_t num_hospitals, ProtocolOptions opts = {})
      : transport_(&transport), num_hospitals_(num_hospitals), opts_(opts) {}

  // Step 1, server side.
  void await_public_key() {
    RoundMessage msg = transport_->receive(kServerId, opts_.timeout);
    if (msg.type != MessageType::kPublicKey || msg.sender != 1) {
      throw ProtocolError("server expected the public key from hospital 1, got " +
                          message_type_name(msg.type) + " from " + std::to_string(msg.sender));
    }
    ByteReader r(msg.payload);
    ctx_ = he::BfvContext::make(he::read_params(r));
    public_key_ = he::read_public_key(r, *ctx_);
    record(msg);
  }

  // Step 2.
  void broadcast_model(const ModelParams& model, uint32_t round) {
    RoundMessage msg{kWireVersion, MessageType::kModelBroadcast, round, kServerId,
                     encode_model_payload(model)};
    for (uint16_t k = 1; k <= num_hospitals_; ++k) transport_->send(k, msg);
    record(msg);
  }

  // Step 5: waits for one encrypted update from each active hospital, sums
  // them in hospital-id order and sends the encrypted aggregate to every
  // hospital.
  ChunkedUpdate aggregate_round(uint32_t round, std::span<const uint16_t> active) {
    if (!ctx_) throw ProtocolError("server has no public parameters yet");
    std::map<uint16_t, ChunkedUpdate> received;
    const std::vector<uint16_t> expected(active.begin(), active.end());
    while (received.size() < expected.size()) {
      RoundMessage msg = transport_->receive(kServerId, opts_.timeout);
      if (msg.type != MessageType::kEncryptedUpdate || msg.round != round) {
        throw ProtocolError("server expected encrypted updates for round " +
                            std::to_string(round) + ", got " + message_type_name(msg.type) +
                            " for round " + std::to_string(msg.round));
      }
      if (std::find(expected.begin(), expected.end(), msg.sender) == expected.end()) {
        throw ProtocolError("update from inactive hospital " + std::to_string(msg.sender));
      }
      if (received.count(msg.sender)) {
        throw ProtocolError("duplicate update from hospital " + std::to_string(msg.sender));
      }
      received.emplace(msg.sender, decode_update_payload(msg.payload, *ctx_));
      record(msg);
    }
    std::vector<ChunkedUpdate> ordered;
    for (auto& [id, u] : received) ordered.push_back(std::move(u));
    ChunkedUpdate sum = aggregate_at_server(ordered, *ctx_);
    RoundMessage out{kWireVersion, MessageType::kEncryptedAggregate, round, kServerId,
                     encode_update_payload(sum)};
    for (uint16_t k = 1; k <= num_hospitals_; ++k) transport_->send(k, out);
    record(out);
    return sum;
  }

  // Optional last step: hospitals upload their final unencrypted models and
  // the server averages them.
  ModelParams collect_final_models(uint32_t round, std::span<const uint16_t> active) {
    std::map<uint16_t, ModelParams> models;
    while (models.size() < active.size()) {
      RoundMessage msg = transport_->receive(kServerId, opts_.timeout);
      if (msg.type != MessageType::kFinalPlainUpdate || msg.round != round) {
        throw ProtocolError("server expected final plain updates");
      }
      models.emplace(msg.sender, decode_model_payload(msg.payload));
      record(msg);
    }
    ModelParams avg = models.begin()->second;
    std::fill(avg.values.begin(), avg.values.end(), 0.0);
    for (auto& [id, m] : models) {
      if (m.values.size() != avg.values.size()) throw ProtocolError("final model shape mismatch");
      for (size_t i = 0; i < m.values.size(); ++i) avg.values[i] += m.values[i];
    }
    for (double& v : avg.values) v /= static_cast<double>(models.size());
    return avg;
  }

  const std::optional<he::PublicKey>& public_key() const { return public_key_; }

  // Everything the server holds, as bytes: parameters, public key and every
  // message it has sent or received. Used by key-material audits.
  std::vector<uint8_t> state_bytes() const {
    ByteWriter w;
    if (ctx_ && public_key_) he::write_public_key(w, ctx_->params(), *public_key_);
    for (const auto& m : log_) w.bytes(m);
    return std::move(w).take();
  }

 private:
  void record(const RoundMessage& msg) { log_.push_back(serialize_message(msg)); }

  Transport* transport_;
  size_t num_hospitals_;
  ProtocolOptions opts_;
  std::shared_ptr<const he::BfvContext> ctx_;
  std::optional<he::PublicKey> public_key_;
  std::vector<std::vector<uint8_t>> log_;
};

class HospitalNode {
 public:
  HospitalNode(uint16_t id, Transport& transport, uint64_t seed, ProtocolOptions opts = {})
      : id_(id), transport_(&transport), rng_(seed, 0x4e0000ULL + id), opts_(opts) {
    require(id >= 1, "hospital ids start at 1");
  }

  uint16_t id() const { return id_; }

  // Step 1 at hospital 1: key generation and public-key distribution. The
  // returned share must be installed at the other hospitals.
  HospitalKeyShare generate_keys(const he::EncryptionParams& params, uint64_t key_seed) {
    ctx_ = he::BfvContext::make(params);
    NoiseSource key_rng(key_seed, 0x6b6579);
    he::KeyPair kp = he::keygen(*ctx_, key_rng);
    RoundMessage msg{kWireVersion, MessageType::kPublicKey, 0, id_,
                     encode_public_key_payload(params, kp.pub)};
    transport_->send(kServerId, msg);
    for (uint16_t k = 1; k <= transport_->num_hospitals(); ++k) {
      if (k != id_) transport_->send(k, msg);
    }
    public_key_ = kp.pub;
    secret_key_ = kp.secret;
    return {params, std::move(kp.secret)};
  }

  void await_public_key() {
    RoundMessage msg = transport_->receive(id_, opts_.timeout);
    if (msg.type != MessageType::kPublicKey) {
      throw ProtocolError("hospital " + std::to_string(id_) + " expected the public key");
    }
    ByteReader r(msg.payload);
    auto prm = he::read_params(r);
    if (!ctx_ || ctx_->params() != prm) ctx_ = he::BfvContext::make(prm);
    public_key_ = he::read_public_key(r, *ctx_);
  }

  void install_secret_key(const HospitalKeyShare& share) {
    if (!ctx_ || ctx_->params() != share.params) ctx_ = he::BfvContext::make(share.params);
    secret_key_ = share.secret;
  }

  bool has_secret_key() const { return secret_key_.has_value(); }
  bool has_public_key() const { return public_key_.has_value(); }

  ModelParams await_broadcast(uint32_t round) {
    RoundMessage msg = transport_->receive(id_, opts_.timeout);
    if (msg.type != MessageType::kModelBroadcast || msg.round != round) {
      throw ProtocolError("hospital " + std::to_string(id_) + " expected model broadcast");
    }
    ModelParams m = decode_model_payload(msg.payload);
    shape_ = m.shape;
    return m;
  }

  // Step 4.
  void send_update(const ModelParams& local, uint32_t round) {
    if (!public_key_ || !ctx_) throw ProtocolError("hospital has no public key");
    const FlatModel flat = flatten(local, codec());
    shape_ = flat.shape;
    ChunkedUpdate u = encrypt_update(flat.values, *public_key_, *ctx_, rng_);
    transport_->send(kServerId, RoundMessage{kWireVersion, MessageType::kEncryptedUpdate,
                                             round, id_, encode_update_payload(u)});
  }

  // Step 6.
  ModelParams await_aggregate(uint32_t round, int active_count) {
    if (!secret_key_) throw ProtocolError("hospital has no secret key");
    RoundMessage msg = transport_->receive(id_, opts_.timeout);
    if (msg.type != MessageType::kEncryptedAggregate || msg.round != round) {
      throw ProtocolError("hospital " + std::to_string(id_) + " expected encrypted aggregate");
    }
    const ChunkedUpdate agg = decode_update_payload(msg.payload, *ctx_);
    return decrypt_aggregate(agg, *secret_key_, *ctx_, active_count, shape_, codec());
  }

  void send_final(const ModelParams& model, uint32_t round) {
    transport_->send(kServerId, RoundMessage{kWireVersion, MessageType::kFinalPlainUpdate,
                                             round, id_, encode_model_payload(model)});
  }

  const he::BfvContext& context() const { return *ctx_; }
  const he::PublicKey& public_key() const { return *public_key_; }
  const he::SecretKey& secret_key() const { return *secret_key_; }

 private:
  he::FixedPointCodec codec() const {
    return he::FixedPointCodec(ctx_->params().b, opts_.max_parties, opts_.fixed_point_scale);
  }

  uint16_t id_;
  Transport* transport_;
  NoiseSource rng_;
  ProtocolOptions opts_;
  std::shared_ptr<const he::BfvContext> ctx_;
  std::optional<he::PublicKey> public_key_;
  std::optional<he::SecretKey> secret_key_;
  std::vector<LayerShape> shape_;
};

// Step 1 for all parties. Hospital 1 (hospitals[0]) must be present.
inline void run_key_ceremony(ServerNode& server, std::span<HospitalNode> hospitals,
                             const he::EncryptionParams& params, uint64_t key_seed) {
  if (hospitals.empty() || hospitals.front().id() != 1) {
    throw ProtocolError("key ceremony needs hospital 1");
  }
  const HospitalKeyShare share = hospitals.front().generate_keys(params, key_seed);
  server.await_public_key();
  for (size_t i = 1; i < hospitals.size(); ++i) {
    hospitals[i].await_public_key();
    hospitals[i].install_secret_key(share);
  }
}

struct SecureAggregationConfig {
  he::EncryptionParams params = he::EncryptionParams::standard();
  uint64_t seed = 1;
  ProtocolOptions options;
  // Off by default: a final upload of unencrypted local models exposes
  // individual hospital models to the server.
  bool final_plain_update = false;
};

// Server and all hospitals driven from one thread over a shared transport.
class SecureAggregation {
 public:
  SecureAggregation(Transport& transport, SecureAggregationConfig config)
      : transport_(&transport), config_(config),
        server_(transport, transport.num_hospitals(), config.options) {
    for (uint16_t k = 1; k <= transport.num_hospitals(); ++k) {
      hospitals_.emplace_back(k, transport, config.seed, config.options);
    }
    run_key_ceremony(server_, hospitals_, config.params, config.seed);
  }

  size_t num_hospitals() const { return hospitals_.size(); }

  // Step 2: server broadcast; returns the model as received by hospital 1.
  ModelParams broadcast(const ModelParams& model, uint32_t round) {
    server_.broadcast_model(model, round);
    ModelParams first;
    for (auto& h : hospitals_) {
      ModelParams got = h.await_broadcast(round);
      if (h.id() == 1) first = std::move(got);
    }
    return first;
  }

  // Steps 4-6. local_models[i] belongs to hospital active[i]. Every hospital
  // decrypts the aggregate; all must agree.
  ModelParams average(uint32_t round, std::span<const ModelParams> local_models,
                      std::span<const uint16_t> active) {
    require(local_models.size() == active.size() && !active.empty(),
            "secure average: one model per active hospital");
    for (size_t i = 0; i < active.size(); ++i) {
      hospital(active[i]).send_update(local_models[i], round);
    }
    server_.aggregate_round(round, active);
    std::optional<ModelParams> result;
    for (auto& h : hospitals_) {
      ModelParams m = h.await_aggregate(round, static_cast<int>(active.size()));
      if (!result) {
        result = std::move(m);
      } else if (m.values != result->values) {
        throw ProtocolError("hospitals decrypted different aggregates");
      }
    }
    return *result;
  }

  ModelParams finalize(uint32_t round, std::span<const ModelParams> local_models,
                       std::span<const uint16_t> active) {
    if (!config_.final_plain_update) {
      throw ProtocolError("final plain update is disabled");
    }
    for (size_t i = 0; i < active.size(); ++i) hospital(active[i]).send_final(local_models[i], round);
    return server_.collect_final_models(round, active);
  }

  const ServerNode& server() const { return server_; }
  HospitalNode& hospital(uint16_t id) {
    if (id < 1 || id > hospitals_.size()) throw ProtocolError("unknown hospital " + std::to_string(id));
    return hospitals_[id - 1];
  }
  const SecureAggregationConfig& config() const { return config_; }

 private:
  Transport* transport_;
  SecureAggregationConfig config_;
  ServerNode server_;
  std::vector<HospitalNode> hospitals_;
};

}  // namespace dpfl::secagg

#endif  // DPFL_SECURE_AGG_PROTOCOL_HPP_
