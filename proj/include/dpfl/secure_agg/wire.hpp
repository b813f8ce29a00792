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

#ifndef DPFL_SECURE_AGG_WIRE_HPP_
#define DPFL_SECURE_AGG_WIRE_HPP_

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpfl/common/bytes.hpp"
#include "dpfl/common/error.hpp"
#include "dpfl/he/bfv.hpp"
#include "dpfl/model/model.hpp"

namespace dpfl::secagg {

inline constexpr std::array<uint8_t, 4> kMagic = {'D', 'O', 'P', 'M'};
inline constexpr uint8_t kWireVersion = 1;
// magic(4) version(1) type(1) round(4) sender(2) payload_len(8)
inline constexpr size_t kHeaderSize = 20;

enum class MessageType : uint8_t {
  kPublicKey = 0,
  kModelBroadcast = 1,
  kEncryptedUpdate = 2,
  kEncryptedAggregate = 3,
  kFinalPlainUpdate = 4,
};

inline std::string message_type_name(MessageType t) {
  switch (t) {
    case MessageType::kPublicKey: return "public-key";
    case MessageType::kModelBroadcast: return "model-broadcast";
    case MessageType::kEncryptedUpdate: return "encrypted-update";
    case MessageType::kEncryptedAggregate: return "encrypted-aggregate";
    case MessageType::kFinalPlainUpdate: return "final-plain-update";
  }
  return "unknown";
}

struct RoundMessage {
  uint8_t version = kWireVersion;
  MessageType type = MessageType::kPublicKey;
  uint32_t round = 0;
  uint16_t sender = 0;
  std::vector<uint8_t> payload;

  bool operator==(const RoundMessage&) const = default;
};

inline std::vector<uint8_t> serialize_message(const RoundMessage& msg) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u8(msg.version);
  w.u8(static_cast<uint8_t>(msg.type));
  w.u32(msg.round);
  w.u16(msg.sender);
  w.u64(msg.payload.size());
  w.bytes(msg.payload);
  return std::move(w).take();
}

inline RoundMessage deserialize_message(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    throw ProtocolError("bad message magic");
  }
  RoundMessage msg;
  msg.version = r.u8();
  if (msg.version != kWireVersion) {
    throw ProtocolError("unsupported wire version " + std::to_string(msg.version));
  }
  const uint8_t type = r.u8();
  if (type > static_cast<uint8_t>(MessageType::kFinalPlainUpdate)) {
    throw ProtocolError("unknown message type " + std::to_string(type));
  }
  msg.type = static_cast<MessageType>(type);
  msg.round = r.u32();
  msg.sender = r.u16();
  const uint64_t len = r.u64();
  if (len != r.remaining()) {
    throw ProtocolError("payload length " + std::to_string(len) + " does not match " +
                        std::to_string(r.remaining()) + " bytes present");
  }
  const auto payload = r.bytes(len);
  msg.payload.assign(payload.begin(), payload.end());
  return msg;
}

// Model payload: u32 layer count; per layer a u16-prefixed name, u32 rank and
// u64 dims; then u64 value count and the f64 values.
inline std::vector<uint8_t> encode_model_payload(const ModelParams& m) {
  ByteWriter w;
  w.u32(static_cast<uint32_t>(m.shape.size()));
  for (const auto& layer : m.shape) {
    w.str(layer.name);
    w.u32(static_cast<uint32_t>(layer.dims.size()));
    for (size_t d : layer.dims) w.u64(d);
  }
  w.u64(m.values.size());
  for (double v : m.values) w.f64(v);
  return std::move(w).take();
}

inline ModelParams decode_model_payload(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  ModelParams m;
  const uint32_t layers = r.u32();
  for (uint32_t i = 0; i < layers; ++i) {
    LayerShape l;
    l.name = r.str();
    const uint32_t rank = r.u32();
    for (uint32_t j = 0; j < rank; ++j) l.dims.push_back(r.u64());
    m.shape.push_back(std::move(l));
  }
  const uint64_t n = r.u64();
  if (n > r.remaining() / 8) throw ProtocolError("model payload truncated");
  m.values.resize(n);
  for (auto& v : m.values) v = r.f64();
  if (!r.done()) throw ProtocolError("trailing bytes in model payload");
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw ProtocolError(e.detail());
  }
  return m;
}

inline std::vector<uint8_t> encode_public_key_payload(const he::EncryptionParams& prm,
                                                      const he::PublicKey& pk) {
  ByteWriter w;
  he::write_public_key(w, prm, pk);
  return std::move(w).take();
}

// Model vector split into ceil(original_len / d) encrypted chunks; the last
// chunk is zero-padded.
struct ChunkedUpdate {
  uint64_t original_len = 0;
  std::vector<he::Ciphertext> chunks;

  size_t num_chunks() const { return chunks.size(); }
  bool operator==(const ChunkedUpdate&) const = default;
};

// Update payload: u64 original_len, u32 chunk count, then each ciphertext.
inline std::vector<uint8_t> encode_update_payload(const ChunkedUpdate& u) {
  ByteWriter w;
  w.u64(u.original_len);
  w.u32(static_cast<uint32_t>(u.chunks.size()));
  for (const auto& ct : u.chunks) he::write_ciphertext(w, ct);
  return std::move(w).take();
}

inline ChunkedUpdate decode_update_payload(std::span<const uint8_t> bytes,
                                           const he::BfvContext& ctx) {
  ByteReader r(bytes);
  ChunkedUpdate u;
  u.original_len = r.u64();
  const uint32_t n = r.u32();
  const size_t d = ctx.params().d;
  if (static_cast<uint64_t>(n) * d < u.original_len ||
      (n > 0 && static_cast<uint64_t>(n - 1) * d >= u.original_len)) {
    throw ProtocolError("chunk count inconsistent with original length");
  }
  for (uint32_t i = 0; i < n; ++i) u.chunks.push_back(he::read_ciphertext(r, ctx));
  if (!r.done()) throw ProtocolError("trailing bytes in update payload");
  return u;
}

}  // namespace dpfl::secagg

#endif  // DPFL_SECURE_AGG_WIRE_HPP_
