/*
 * Copyright 2026 The cellkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cellkit/bus/handler_registry.hpp"
#include "cellkit/bus/message.hpp"
#include "cellkit/core/types.hpp"

namespace cellkit::bus {

using Duration = std::chrono::milliseconds;

// Owns a file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  int release() noexcept {
    int f = fd_;
    fd_ = -1;
    return f;
  }
  void close() noexcept;
  // Unblocks pending reads/writes on other threads.
  void shutdown() noexcept;

 private:
  int fd_ = -1;
};

// Resolves an IPv4 host name or dotted quad; throws kInvalidInterface.
std::string resolve_ipv4(const std::string& host);

// Writes the whole buffer; throws kConnectionRefused on a broken stream.
void write_all(int fd, std::string_view bytes);

// Framed-JSON server. Each accepted connection gets a reader thread; the
// handler may answer from any thread, and responses on one connection are
// serialized.
class TcpServer {
 public:
  using RequestHandler = std::function<void(const Message&, Reply)>;

  // Binds immediately. Port 0 picks an ephemeral port.
  // Throws kPortInUse or kInvalidInterface.
  TcpServer(const std::string& host, std::uint16_t port, RequestHandler handler);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  Endpoint endpoint() const { return Endpoint{host_, port_}; }

  void stop();

 private:
  struct Connection;

  void accept_loop();
  void serve(std::shared_ptr<Connection> conn);

  std::string host_;
  std::uint16_t port_ = 0;
  RequestHandler handler_;
  Socket listener_;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::vector<std::pair<std::shared_ptr<Connection>, std::thread>> readers_;
  std::thread acceptor_;
};

// Convenience: a server that routes through a sealed registry.
std::unique_ptr<TcpServer> serve_registry(const std::string& host, std::uint16_t port,
                                          const HandlerRegistry& registry);

// Opens a connection, sends one request, waits for the correlated response.
// Errors: kConnectionRefused (cannot connect within timeout), kTimeout (no
// response in time), kMalformedResponse (bad frame, envelope, or msg_id).
Message send_request(const Endpoint& endpoint, const Message& request, Duration timeout);

// A persistent connection multiplexing concurrent requests by msg_id.
class RpcClient {
 public:
  RpcClient(const Endpoint& endpoint, Duration connect_timeout);
  ~RpcClient();
  RpcClient(const RpcClient&) = delete;
  RpcClient& operator=(const RpcClient&) = delete;

  // Thread-safe.
  Message call(const Message& request, Duration timeout);

 private:
  struct Pending {
    bool done = false;
    Message response;
    std::string error;
  };

  void read_loop();
  void fail_all(const std::string& why);

  Socket sock_;
  std::mutex write_mu_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, std::shared_ptr<Pending>> pending_;
  bool broken_ = false;
  std::string broken_reason_;
  std::thread reader_;
};

}  // namespace cellkit::bus
