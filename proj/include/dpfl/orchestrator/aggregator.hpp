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

// Model averaging back ends used by the training loop: plain in-memory
// averaging, the encrypted protocol, and an audit mode that runs the
// encrypted protocol and checks it against the plain average.

#ifndef DPFL_ORCHESTRATOR_AGGREGATOR_HPP_
#define DPFL_ORCHESTRATOR_AGGREGATOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dpfl/common/error.hpp"
#include "dpfl/model/model.hpp"
#include "dpfl/secure_agg/protocol.hpp"
#include "dpfl/secure_agg/tcp_transport.hpp"
#include "dpfl/secure_agg/transport.hpp"

namespace dpfl {

enum class AggregationMode { kPlaintext, kSecure, kPlaintextAudit };
enum class TransportKind { kLoopback, kTcp };

inline std::string aggregation_mode_name(AggregationMode m) {
  switch (m) {
    case AggregationMode::kPlaintext: return "off";
    case AggregationMode::kSecure: return "on";
    case AggregationMode::kPlaintextAudit: return "plaintext-audit";
  }
  return "?";
}

inline AggregationMode parse_aggregation_mode(const std::string& s) {
  if (s == "off") return AggregationMode::kPlaintext;
  if (s == "on") return AggregationMode::kSecure;
  if (s == "plaintext-audit") return AggregationMode::kPlaintextAudit;
  throw InvalidArgument("secure mode must be on, off or plaintext-audit, got '" + s + "'");
}

inline TransportKind parse_transport_kind(const std::string& s) {
  if (s == "loopback") return TransportKind::kLoopback;
  if (s == "tcp") return TransportKind::kTcp;
  throw InvalidArgument("transport must be loopback or tcp, got '" + s + "'");
}

// Sums in the given order, then divides once.
inline ModelParams plain_average(std::span<const ModelParams> models) {
  require(!models.empty(), "plain_average: no models");
  ModelParams out = models.front();
  for (size_t k = 1; k < models.size(); ++k) {
    require(models[k].values.size() == out.values.size(), "plain_average: size mismatch");
    for (size_t j = 0; j < out.values.size(); ++j) out.values[j] += models[k].values[j];
  }
  if (models.size() > 1) {
    const auto n = static_cast<double>(models.size());
    for (double& v : out.values) v /= n;
  }
  return out;
}

class Aggregator {
 public:
  virtual ~Aggregator() = default;
  // Start of a round; the secure back end sends the model over the wire.
  virtual void broadcast(const ModelParams& /*global*/, uint32_t /*round*/) {}
  // models[i] belongs to hospital ids[i]; ids are ascending.
  virtual ModelParams average(uint32_t round, std::span<const ModelParams> models,
                              std::span<const uint16_t> ids) = 0;
  // Largest |secure - plain| seen so far (audit mode only).
  virtual double max_audit_deviation() const { return 0.0; }
};

class PlaintextAggregator : public Aggregator {
 public:
  ModelParams average(uint32_t, std::span<const ModelParams> models,
                      std::span<const uint16_t>) override {
    return plain_average(models);
  }
};

struct SecureAggregatorOptions {
  TransportKind transport = TransportKind::kLoopback;
  he::EncryptionParams params = he::EncryptionParams::standard();
  uint64_t seed = 1;
  bool audit = false;
  // Audit tolerance: one quantization step of the fixed-point codec.
  double audit_tolerance = 5e-4;
};

class SecureAggregator : public Aggregator {
 public:
  SecureAggregator(size_t num_hospitals, SecureAggregatorOptions opts) : opts_(opts) {
    if (opts.transport == TransportKind::kTcp) {
      transport_ = std::make_unique<secagg::TcpTransport>(num_hospitals);
    } else {
      transport_ = std::make_unique<secagg::LoopbackTransport>(num_hospitals);
    }
    secagg::SecureAggregationConfig cfg;
    cfg.params = opts.params;
    cfg.seed = opts.seed;
    cfg.options.max_parties = static_cast<int>(std::max<size_t>(num_hospitals, 1));
    protocol_ = std::make_unique<secagg::SecureAggregation>(*transport_, cfg);
  }

  void broadcast(const ModelParams& global, uint32_t round) override {
    protocol_->broadcast(global, round);
  }

  ModelParams average(uint32_t round, std::span<const ModelParams> models,
                      std::span<const uint16_t> ids) override {
    ModelParams out = protocol_->average(round, models, ids);
    if (opts_.audit) {
      const ModelParams plain = plain_average(models);
      double worst = 0.0;
      for (size_t j = 0; j < plain.values.size(); ++j) {
        worst = std::max(worst, std::abs(plain.values[j] - out.values[j]));
      }
      max_deviation_ = std::max(max_deviation_, worst);
      if (worst > opts_.audit_tolerance) {
        throw ProtocolError("audit: secure average deviates from plaintext by " +
                            std::to_string(worst) + " in round " + std::to_string(round));
      }
    }
    return out;
  }

  double max_audit_deviation() const override { return max_deviation_; }
  const secagg::SecureAggregation& protocol() const { return *protocol_; }

 private:
  SecureAggregatorOptions opts_;
  std::unique_ptr<secagg::Transport> transport_;
  std::unique_ptr<secagg::SecureAggregation> protocol_;
  double max_deviation_ = 0.0;
};

inline std::unique_ptr<Aggregator> make_aggregator(AggregationMode mode, size_t num_hospitals,
                                                   SecureAggregatorOptions opts = {}) {
  if (mode == AggregationMode::kPlaintext) return std::make_unique<PlaintextAggregator>();
  opts.audit = mode == AggregationMode::kPlaintextAudit;
  return std::make_unique<SecureAggregator>(num_hospitals, opts);
}

}  // namespace dpfl

#endif  // DPFL_ORCHESTRATOR_AGGREGATOR_HPP_
