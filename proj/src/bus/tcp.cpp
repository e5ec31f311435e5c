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

#include "cellkit/bus/tcp.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "cellkit/bus/framing.hpp"

namespace cellkit::bus {
namespace {

using Clock = std::chrono::steady_clock;

std::string errno_text(int err) { return std::strerror(err); }

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, resolve_ipv4(host).c_str(), &addr.sin_addr) != 1) {
    fail(ErrorCode::kInvalidInterface, "cannot parse address '" + host + "'");
  }
  return addr;
}

int remaining_ms(Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(left);
}

void set_nonblocking(int fd, bool on) {
  int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, on ? (flags | O_NONBLOCK) : (flags & ~O_NONBLOCK));
}

Socket connect_with_timeout(const Endpoint& ep, Clock::time_point deadline) {
  sockaddr_in addr;
  try {
    addr = make_addr(ep.host, ep.port);
  } catch (const Error& e) {
    fail(ErrorCode::kConnectionRefused, ep.str() + ": " + e.detail());
  }
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) fail(ErrorCode::kConnectionRefused, "socket: " + errno_text(errno));
  set_nonblocking(s.fd(), true);
  int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
  if (rc != 0 && errno != EINPROGRESS) {
    fail(ErrorCode::kConnectionRefused, ep.str() + ": " + errno_text(errno));
  }
  if (rc != 0) {
    pollfd pfd{s.fd(), POLLOUT, 0};
    int n;
    do {
      n = ::poll(&pfd, 1, remaining_ms(deadline));
    } while (n < 0 && errno == EINTR);
    if (n == 0) fail(ErrorCode::kConnectionRefused, ep.str() + ": connect timed out");
    int err = 0;
    socklen_t len = sizeof(err);
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (n < 0 || err != 0) fail(ErrorCode::kConnectionRefused, ep.str() + ": " + errno_text(n < 0 ? errno : err));
  }
  set_nonblocking(s.fd(), false);
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return s;
}

// Reads one frame body before the deadline.
std::string read_frame(int fd, FrameDecoder& decoder, Clock::time_point deadline) {
  char buf[8192];
  for (;;) {
    if (auto body = decoder.next()) return *body;
    pollfd pfd{fd, POLLIN, 0};
    int n = ::poll(&pfd, 1, remaining_ms(deadline));
    if (n < 0 && errno == EINTR) continue;
    if (n == 0) fail(ErrorCode::kTimeout, "no response before deadline");
    ssize_t got = ::recv(fd, buf, sizeof(buf), 0);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) fail(ErrorCode::kMalformedResponse, "connection closed before a full response arrived");
    decoder.feed(buf, static_cast<std::size_t>(got));
  }
}

}  // namespace

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.release();
  }
  return *this;
}

void Socket::close() noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

std::string resolve_ipv4(const std::string& host) {
  in_addr probe{};
  if (::inet_pton(AF_INET, host.c_str(), &probe) == 1) return host;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    fail(ErrorCode::kInvalidInterface, "cannot resolve '" + host + "'");
  }
  char out[INET_ADDRSTRLEN];
  ::inet_ntop(AF_INET, &reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr, out, sizeof(out));
  ::freeaddrinfo(res);
  return out;
}

void write_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorCode::kConnectionRefused, "send: " + errno_text(errno));
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

// --- server ---------------------------------------------------------------

struct TcpServer::Connection {
  Socket sock;
  std::mutex write_mu;
  std::atomic<bool> open{true};
  std::atomic<bool> finished{false};

  void send(const Message& m) {
    std::lock_guard lk(write_mu);
    if (!open) return;
    try {
      write_all(sock.fd(), encode_frame(encode_envelope(m)));
    } catch (const Error&) {
      open = false;
    }
  }
};

TcpServer::TcpServer(const std::string& host, std::uint16_t port, RequestHandler handler)
    : host_(host), handler_(std::move(handler)) {
  sockaddr_in addr = make_addr(host, port);
  listener_ = Socket(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!listener_.valid()) fail(ErrorCode::kInternal, "socket: " + errno_text(errno));
  int one = 1;
  ::setsockopt(listener_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int err = errno;
    if (err == EADDRINUSE) fail(ErrorCode::kPortInUse, host + ":" + std::to_string(port) + " is in use");
    fail(ErrorCode::kInvalidInterface, host + ": " + errno_text(err));
  }
  if (::listen(listener_.fd(), 128) != 0) fail(ErrorCode::kInternal, "listen: " + errno_text(errno));
  socklen_t len = sizeof(addr);
  ::getsockname(listener_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  decltype(readers_) readers;
  {
    std::lock_guard lk(mu_);
    readers.swap(readers_);
  }
  for (auto& [c, t] : readers) {
    c->open = false;
    c->sock.shutdown();
    t.join();
  }
  listener_.close();
}

void TcpServer::accept_loop() {
  while (!stopping_) {
    int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;  // listener shut down
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    auto conn = std::make_shared<Connection>();
    conn->sock = Socket(fd);
    std::lock_guard lk(mu_);
    if (stopping_) return;
    // Reap readers whose peers have gone away.
    std::erase_if(readers_, [](auto& entry) {
      if (!entry.first->finished) return false;
      entry.second.join();
      return true;
    });
    readers_.emplace_back(conn, std::thread([this, conn] { serve(conn); }));
  }
}

void TcpServer::serve(std::shared_ptr<Connection> conn) {
  FrameDecoder decoder;
  char buf[8192];
  while (conn->open) {
    ssize_t got = ::recv(conn->sock.fd(), buf, sizeof(buf), 0);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) break;
    decoder.feed(buf, static_cast<std::size_t>(got));
    try {
      while (auto body = decoder.next()) {
        Message request;
        try {
          request = decode_envelope(*body);
        } catch (const Error& e) {
          // Answer with whatever id we can recover so the caller can correlate.
          std::string id;
          try {
            auto j = Json::parse(*body);
            if (j.is_object() && j.contains("msg_id") && j["msg_id"].is_string()) id = j["msg_id"];
          } catch (...) {
          }
          conn->send(make_rejection(id, e));
          continue;
        }
        std::weak_ptr<Connection> weak = conn;
        handler_(request, [weak](Message response) {
          if (auto c = weak.lock()) c->send(response);
        });
      }
    } catch (const Error&) {
      break;  // oversize frame; the stream cannot be resynchronized
    }
  }
  conn->open = false;
  conn->finished = true;
}

std::unique_ptr<TcpServer> serve_registry(const std::string& host, std::uint16_t port,
                                          const HandlerRegistry& registry) {
  return std::make_unique<TcpServer>(host, port,
                                     [&registry](const Message& m, Reply r) { registry.dispatch(m, std::move(r)); });
}

// --- client ---------------------------------------------------------------

Message send_request(const Endpoint& endpoint, const Message& request, Duration timeout) {
  const auto deadline = Clock::now() + timeout;
  Socket s = connect_with_timeout(endpoint, deadline);
  try {
    write_all(s.fd(), encode_frame(encode_envelope(request)));
  } catch (const Error& e) {
    fail(ErrorCode::kConnectionRefused, endpoint.str() + ": " + e.detail());
  }
  FrameDecoder decoder;
  const std::string body = read_frame(s.fd(), decoder, deadline);
  Message response;
  try {
    response = decode_envelope(body);
  } catch (const Error& e) {
    fail(ErrorCode::kMalformedResponse, e.detail());
  }
  if (response.msg_id != request.msg_id) {
    fail(ErrorCode::kMalformedResponse, "response id " + response.msg_id + " does not match " + request.msg_id);
  }
  return response;
}

RpcClient::RpcClient(const Endpoint& endpoint, Duration connect_timeout)
    : sock_(connect_with_timeout(endpoint, Clock::now() + connect_timeout)) {
  reader_ = std::thread([this] { read_loop(); });
}

RpcClient::~RpcClient() {
  sock_.shutdown();
  if (reader_.joinable()) reader_.join();
}

Message RpcClient::call(const Message& request, Duration timeout) {
  auto slot = std::make_shared<Pending>();
  {
    std::lock_guard lk(mu_);
    if (broken_) fail(ErrorCode::kConnectionRefused, broken_reason_);
    if (!pending_.emplace(request.msg_id, slot).second) {
      fail(ErrorCode::kInvalidArgument, "msg_id " + request.msg_id + " already in flight");
    }
  }
  try {
    std::lock_guard lk(write_mu_);
    write_all(sock_.fd(), encode_frame(encode_envelope(request)));
  } catch (...) {
    std::lock_guard lk(mu_);
    pending_.erase(request.msg_id);
    throw;
  }
  std::unique_lock lk(mu_);
  if (!cv_.wait_for(lk, timeout, [&] { return slot->done; })) {
    pending_.erase(request.msg_id);
    fail(ErrorCode::kTimeout, "no response to " + request.msg_id);
  }
  if (!slot->error.empty()) fail(ErrorCode::kMalformedResponse, slot->error);
  return slot->response;
}

void RpcClient::read_loop() {
  FrameDecoder decoder;
  char buf[8192];
  try {
    for (;;) {
      ssize_t got = ::recv(sock_.fd(), buf, sizeof(buf), 0);
      if (got < 0 && errno == EINTR) continue;
      if (got <= 0) break;
      decoder.feed(buf, static_cast<std::size_t>(got));
      while (auto body = decoder.next()) {
        Message m = decode_envelope(*body);
        std::lock_guard lk(mu_);
        auto it = pending_.find(m.msg_id);
        if (it == pending_.end()) continue;  // late reply for a timed-out call
        it->second->response = std::move(m);
        it->second->done = true;
        pending_.erase(it);
        cv_.notify_all();
      }
    }
    fail_all("connection closed");
  } catch (const Error& e) {
    fail_all(e.detail());
  }
}

void RpcClient::fail_all(const std::string& why) {
  std::lock_guard lk(mu_);
  broken_ = true;
  broken_reason_ = why;
  for (auto& [_, p] : pending_) {
    p->done = true;
    p->error = why;
  }
  pending_.clear();
  cv_.notify_all();
}

}  // namespace cellkit::bus
