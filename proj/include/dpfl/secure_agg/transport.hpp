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

#ifndef DPFL_SECURE_AGG_TRANSPORT_HPP_
#define DPFL_SECURE_AGG_TRANSPORT_HPP_

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "dpfl/common/error.hpp"
#include "dpfl/secure_agg/wire.hpp"

namespace dpfl::secagg {

inline constexpr uint16_t kServerId = 0;

// Message delivery between the server (endpoint 0) and hospitals 1..K.
// Delivery is reliable, ordered and exactly-once per (sender, receiver) pair.
// Messages are copied to the wire on send, so later changes by the sender are
// not observed by the receiver.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual size_t num_hospitals() const = 0;
  // msg.sender identifies the origin endpoint.
  virtual void send(uint16_t to, const RoundMessage& msg) = 0;
  // Next message addressed to `endpoint`. Throws ProtocolError on timeout or
  // when a sender's round number goes backwards.
  virtual RoundMessage receive(uint16_t endpoint, std::chrono::milliseconds timeout) = 0;
};

// Blocking FIFO of raw frames with per-sender round monotonicity checks.
class Inbox {
 public:
  void push(std::vector<uint8_t> frame) {
    {
      std::lock_guard lock(mu_);
      frames_.push_back(std::move(frame));
    }
    cv_.notify_one();
  }

  void fail(std::string reason) {
    {
      std::lock_guard lock(mu_);
      if (failure_.empty()) failure_ = std::move(reason);
    }
    cv_.notify_all();
  }

  RoundMessage pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return !frames_.empty() || !failure_.empty(); })) {
      throw ProtocolError("receive timed out after " + std::to_string(timeout.count()) + " ms");
    }
    if (frames_.empty()) throw ProtocolError("transport failure: " + failure_);
    std::vector<uint8_t> frame = std::move(frames_.front());
    frames_.pop_front();
    RoundMessage msg = deserialize_message(frame);
    auto [it, fresh] = last_round_.try_emplace(msg.sender, msg.round);
    if (!fresh) {
      if (msg.round < it->second) {
        throw ProtocolError("round went backwards for sender " + std::to_string(msg.sender));
      }
      it->second = msg.round;
    }
    return msg;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::vector<uint8_t>> frames_;
  std::map<uint16_t, uint32_t> last_round_;
  std::string failure_;
};

// In-process transport. Deterministic; every message still goes through the
// byte-level wire format.
class LoopbackTransport : public Transport {
 public:
  explicit LoopbackTransport(size_t num_hospitals)
      : num_hospitals_(num_hospitals), inboxes_(num_hospitals + 1) {
    require(num_hospitals >= 1, "transport: need at least one hospital");
  }

  size_t num_hospitals() const override { return num_hospitals_; }

  void send(uint16_t to, const RoundMessage& msg) override {
    check_endpoint(to);
    check_endpoint(msg.sender);
    inboxes_[to].push(serialize_message(msg));
  }

  RoundMessage receive(uint16_t endpoint, std::chrono::milliseconds timeout) override {
    check_endpoint(endpoint);
    return inboxes_[endpoint].pop(timeout);
  }

 private:
  void check_endpoint(uint16_t id) const {
    if (id > num_hospitals_) throw ProtocolError("unknown endpoint " + std::to_string(id));
  }

  size_t num_hospitals_;
  std::vector<Inbox> inboxes_;
};

}  // namespace dpfl::secagg

#endif  // DPFL_SECURE_AGG_TRANSPORT_HPP_
