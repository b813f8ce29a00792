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

// TCP transport: every endpoint listens on its own socket; each message
// travels as a u64 little-endian length followed by the serialized
// RoundMessage.

#ifndef DPFL_SECURE_AGG_TCP_TRANSPORT_HPP_
#define DPFL_SECURE_AGG_TCP_TRANSPORT_HPP_

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dpfl/secure_agg/transport.hpp"

namespace dpfl::secagg {

namespace internal {

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { reset(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  void shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

inline std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

inline void write_all(int fd, const uint8_t* data, size_t len) {
  while (len > 0) {
    const ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(errno_text("tcp send"));
    }
    data += n;
    len -= static_cast<size_t>(n);
  }
}

// false on orderly EOF before any byte was read.
inline bool read_all(int fd, uint8_t* data, size_t len) {
  size_t got = 0;
  while (got < len) {
    const ssize_t n = ::recv(fd, data + got, len - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      throw ProtocolError("tcp peer closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(errno_text("tcp recv"));
    }
    got += static_cast<size_t>(n);
  }
  return true;
}

}  // namespace internal

// One endpoint of the TCP mesh. Listens on 127.0.0.1 (port 0 picks an
// ephemeral port) and pushes every received frame into its inbox from
// background reader threads.
class TcpEndpoint {
 public:
  static constexpr uint64_t kMaxFrame = uint64_t{1} << 32;

  explicit TcpEndpoint(uint16_t id, uint16_t port = 0) : id_(id) {
    listener_ = internal::Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!listener_.valid()) throw ProtocolError(internal::errno_text("socket"));
    int one = 1;
    ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      throw ProtocolError(internal::errno_text("bind"));
    }
    if (::listen(listener_.fd(), 64) < 0) throw ProtocolError(internal::errno_text("listen"));
    socklen_t len = sizeof addr;
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  TcpEndpoint(const TcpEndpoint&) = delete;
  TcpEndpoint& operator=(const TcpEndpoint&) = delete;

  ~TcpEndpoint() {
    stopping_ = true;
    {
      std::lock_guard lock(mu_);
      for (auto& [peer, sock] : outgoing_) sock.shutdown_both();
      for (auto& sock : incoming_) sock->shutdown_both();
    }
    if (acceptor_.joinable()) acceptor_.join();
    for (auto& t : readers_) {
      if (t.joinable()) t.join();
    }
  }

  uint16_t id() const { return id_; }
  uint16_t port() const { return port_; }

  void add_peer(uint16_t peer, uint16_t port) {
    std::lock_guard lock(mu_);
    peer_ports_[peer] = port;
  }

  // Sends over a connection dedicated to this (sender, receiver) pair, which
  // preserves per-pair ordering.
  void send(uint16_t to, const RoundMessage& msg) {
    const std::vector<uint8_t> body = serialize_message(msg);
    std::lock_guard lock(mu_);
    auto it = outgoing_.find(to);
    if (it == outgoing_.end()) it = outgoing_.emplace(to, connect_locked(to)).first;
    const uint64_t len = body.size();
    uint8_t prefix[8];
    std::memcpy(prefix, &len, 8);
    internal::write_all(it->second.fd(), prefix, 8);
    internal::write_all(it->second.fd(), body.data(), body.size());
  }

  RoundMessage receive(std::chrono::milliseconds timeout) { return inbox_.pop(timeout); }

 private:
  internal::Socket connect_locked(uint16_t to) {
    auto pit = peer_ports_.find(to);
    if (pit == peer_ports_.end()) throw ProtocolError("no address for endpoint " + std::to_string(to));
    internal::Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw ProtocolError(internal::errno_text("socket"));
    int one = 1;
    ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(pit->second);
    if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      throw ProtocolError(internal::errno_text("connect"));
    }
    return s;
  }

  void accept_loop() {
    while (!stopping_) {
      pollfd pfd{listener_.fd(), POLLIN, 0};
      const int rc = ::poll(&pfd, 1, 50);
      if (rc <= 0 || stopping_) continue;
      const int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) continue;
      auto sock = std::make_shared<internal::Socket>(fd);
      std::lock_guard lock(mu_);
      if (stopping_) break;
      incoming_.push_back(sock);
      readers_.emplace_back([this, sock] { read_loop(sock); });
    }
  }

  void read_loop(std::shared_ptr<internal::Socket> sock) {
    try {
      while (!stopping_) {
        uint8_t prefix[8];
        if (!internal::read_all(sock->fd(), prefix, 8)) return;
        uint64_t len;
        std::memcpy(&len, prefix, 8);
        if (len < kHeaderSize || len > kMaxFrame) {
          throw ProtocolError("bad frame length " + std::to_string(len));
        }
        std::vector<uint8_t> frame(len);
        if (!internal::read_all(sock->fd(), frame.data(), frame.size())) {
          throw ProtocolError("tcp peer closed mid-frame");
        }
        inbox_.push(std::move(frame));
      }
    } catch (const std::exception& e) {
      if (!stopping_) inbox_.fail(e.what());
    }
  }

  uint16_t id_;
  uint16_t port_ = 0;
  internal::Socket listener_;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::map<uint16_t, uint16_t> peer_ports_;
  std::map<uint16_t, internal::Socket> outgoing_;
  std::vector<std::shared_ptr<internal::Socket>> incoming_;
  std::vector<std::thread> readers_;
  std::thread acceptor_;
  Inbox inbox_;
};

// Server plus K hospitals, each on its own loopback TCP socket, hosted in
// this process. For multi-process deployments construct one TcpEndpoint per
// process and exchange ports out of band.
class TcpTransport : public Transport {
 public:
  explicit TcpTransport(size_t num_hospitals) : num_hospitals_(num_hospitals) {
    require(num_hospitals >= 1, "transport: need at least one hospital");
    for (size_t i = 0; i <= num_hospitals; ++i) {
      endpoints_.push_back(std::make_unique<TcpEndpoint>(static_cast<uint16_t>(i)));
    }
    for (auto& from : endpoints_) {
      for (auto& to : endpoints_) from->add_peer(to->id(), to->port());
    }
  }

  size_t num_hospitals() const override { return num_hospitals_; }

  void send(uint16_t to, const RoundMessage& msg) override {
    check_endpoint(to);
    check_endpoint(msg.sender);
    endpoints_[msg.sender]->send(to, msg);
  }

  RoundMessage receive(uint16_t endpoint, std::chrono::milliseconds timeout) override {
    check_endpoint(endpoint);
    return endpoints_[endpoint]->receive(timeout);
  }

 private:
  void check_endpoint(uint16_t id) const {
    if (id > num_hospitals_) throw ProtocolError("unknown endpoint " + std::to_string(id));
  }

  size_t num_hospitals_;
  std::vector<std::unique_ptr<TcpEndpoint>> endpoints_;
};

}  // namespace dpfl::secagg

#endif  // DPFL_SECURE_AGG_TCP_TRANSPORT_HPP_
