// Copyright 2026 The PEPSI Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <functional>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>

#include "pepsi/wire.hpp"

namespace pepsi {

/// Frames on the stream are a u32 little-endian length and the message.
inline constexpr u32 kMaxFrameBytes = 1u << 31;

namespace detail {

inline std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

inline void write_all(int fd, const u8* p, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
    if (k < 0 && errno == EINTR) continue;
    PEPSI_ENFORCE(k > 0, NetworkError, errno_text("send"));
    p += k;
    n -= static_cast<std::size_t>(k);
  }
}

// Returns false on a clean end of stream before the first byte.
inline bool read_all(int fd, u8* p, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t k = ::recv(fd, p + got, n - got, 0);
    if (k < 0 && errno == EINTR) continue;
    PEPSI_ENFORCE(k >= 0, NetworkError, errno_text("recv"));
    if (k == 0) {
      PEPSI_ENFORCE(got == 0, NetworkError, "connection closed mid-frame");
      return false;
    }
    got += static_cast<std::size_t>(k);
  }
  return true;
}

}  // namespace detail

inline void send_frame(int fd, std::span<const u8> msg) {
  PEPSI_ENFORCE(msg.size() <= kMaxFrameBytes, NetworkError, "frame too large");
  u8 len[4];
  for (int i = 0; i < 4; ++i) len[i] = static_cast<u8>(msg.size() >> (8 * i));
  detail::write_all(fd, len, 4);
  detail::write_all(fd, msg.data(), msg.size());
}

/// nullopt on a clean close between frames.
inline std::optional<Bytes> recv_frame(int fd) {
  u8 len[4];
  if (!detail::read_all(fd, len, 4)) return std::nullopt;
  u32 n = 0;
  for (int i = 0; i < 4; ++i) n |= static_cast<u32>(len[i]) << (8 * i);
  PEPSI_ENFORCE(n <= kMaxFrameBytes, NetworkError, "frame too large");
  Bytes msg(n);
  PEPSI_ENFORCE(n == 0 || detail::read_all(fd, msg.data(), n), NetworkError, "connection closed mid-frame");
  return msg;
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
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
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline Socket connect_tcp(const std::string& host, u16 port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res);
  PEPSI_ENFORCE(rc == 0, NetworkError, "resolve " + host + ": " + ::gai_strerror(rc));
  std::string last = "no addresses";
  for (addrinfo* a = res; a; a = a->ai_next) {
    Socket s(::socket(a->ai_family, a->ai_socktype, a->ai_protocol));
    if (s.fd() < 0) continue;
    if (::connect(s.fd(), a->ai_addr, a->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      const int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return s;
    }
    last = detail::errno_text("connect");
  }
  ::freeaddrinfo(res);
  throw NetworkError("cannot connect to " + host + ":" + service + " (" + last + ")");
}

struct TransportStats {
  std::atomic<u64> frames_in{0};
  std::atomic<u64> frames_out{0};
  std::atomic<u64> bytes_in{0};
  std::atomic<u64> bytes_out{0};
};

/// Listener that runs one thread per connection. Each received frame is
/// passed to the handler and its result sent back as one frame; a handler
/// exception closes the connection.
class TcpServer {
 public:
  using Handler = std::function<Bytes(std::span<const u8>)>;
  using Logger = std::function<void(const std::string&)>;

  TcpServer(Handler handler, u16 port = 0, const std::string& bind_host = "127.0.0.1", Logger log = {})
      : handler_(std::move(handler)), log_(std::move(log)) {
    listener_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    PEPSI_ENFORCE(listener_.fd() >= 0, NetworkError, detail::errno_text("socket"));
    const int one = 1;
    ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    PEPSI_ENFORCE(::inet_pton(AF_INET, bind_host.c_str(), &addr.sin_addr) == 1, NetworkError,
                  "bind address must be an IPv4 literal: " + bind_host);
    PEPSI_ENFORCE(::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0, NetworkError,
                  detail::errno_text("bind"));
    PEPSI_ENFORCE(::listen(listener_.fd(), 64) == 0, NetworkError, detail::errno_text("listen"));
    socklen_t len = sizeof(addr);
    ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;
  ~TcpServer() { stop(); }

  u16 port() const { return port_; }
  const TransportStats& stats() const { return stats_; }

  /// Blocks until stop() is called from another thread or a signal handler path.
  void wait() {
    std::unique_lock lock(mu_);
    stopped_cv_.wait(lock, [this] { return stopping_; });
  }

  /// Blocks until n replies have been fully written or the server stops.
  void wait_for_replies(u64 n) {
    std::unique_lock lock(mu_);
    stopped_cv_.wait(lock, [&] { return stopping_ || stats_.frames_out.load() >= n; });
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      if (stopped_) return;
      stopped_ = true;
      stopping_ = true;
      for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    stopped_cv_.notify_all();
    ::shutdown(listener_.fd(), SHUT_RDWR);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::list<std::thread> workers;
    {
      std::lock_guard lock(mu_);
      workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
    listener_.reset();
  }

 private:
  void accept_loop() {
    while (true) {
      const int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) {
        if (errno == EINTR) continue;
        return;
      }
      std::lock_guard lock(mu_);
      if (stopping_) {
        ::close(fd);
        return;
      }
      open_fds_.push_back(fd);
      workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
  }

  void serve_connection(int fd) {
    try {
      while (auto frame = recv_frame(fd)) {
        ++stats_.frames_in;
        stats_.bytes_in += frame->size();
        const Bytes reply = handler_(*frame);
        send_frame(fd, reply);
        stats_.bytes_out += reply.size();
        {
          std::lock_guard lock(mu_);
          ++stats_.frames_out;
        }
        stopped_cv_.notify_all();
        if (log_) {
          log_("query: request " + std::to_string(frame->size()) + " B, response " + std::to_string(reply.size()) +
               " B");
        }
      }
    } catch (const std::exception& e) {
      if (log_) log_(std::string("connection closed: ") + e.what());
    }
    std::lock_guard lock(mu_);
    open_fds_.remove(fd);
    ::close(fd);
  }

  Handler handler_;
  Logger log_;
  Socket listener_;
  u16 port_ = 0;
  std::thread accept_thread_;
  std::mutex mu_;
  std::condition_variable stopped_cv_;
  bool stopping_ = false;
  bool stopped_ = false;
  std::list<int> open_fds_;
  std::list<std::thread> workers_;
  TransportStats stats_;
};

/// One query over a fresh connection: exactly one request frame out and one
/// response frame back.
struct QueryExchange {
  Response response;
  u64 request_bytes = 0;
  u64 response_bytes = 0;
  u32 frames_sent = 0;
  u32 frames_received = 0;
};

inline QueryExchange tcp_query(const std::string& host, u16 port, const Request& req) {
  Socket s = connect_tcp(host, port);
  QueryExchange x;
  const Bytes out = serialize(req);
  send_frame(s.fd(), out);
  x.request_bytes = out.size();
  x.frames_sent = 1;
  ::shutdown(s.fd(), SHUT_WR);
  auto in = recv_frame(s.fd());
  PEPSI_ENFORCE(in.has_value(), NetworkError, "server closed the connection without a response");
  x.frames_received = 1;
  x.response_bytes = in->size();
  x.response = deserialize_response(*in);
  return x;
}

}  // namespace pepsi
