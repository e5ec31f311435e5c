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

#include "cellkit/engine/protocol.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <thread>

#include "cellkit/bus/tcp.hpp"
#include "cellkit/core/error.hpp"
#include "cellkit/core/types.hpp"

namespace cellkit::engine {
namespace {

using namespace std::chrono_literals;
using bus::Socket;

std::optional<Json> parse_line(const std::string& line, std::uint64_t& malformed) {
  if (line.find_first_not_of(" \t\r") == std::string::npos) return std::nullopt;
  try {
    return Json::parse(line);
  } catch (const Json::parse_error&) {
    ++malformed;
    return std::nullopt;
  }
}

sockaddr_in ipv4(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  ::inet_pton(AF_INET, bus::resolve_ipv4(ep.host).c_str(), &addr.sin_addr);
  return addr;
}

class TcpLinesInput final : public InputHandler {
 public:
  explicit TcpLinesInput(std::string address) : address_(std::move(address)) {}

  std::optional<Json> next(std::chrono::milliseconds wait) override {
    const auto deadline = std::chrono::steady_clock::now() + wait;
    ensure_listening();
    for (;;) {
      while (auto line = lines_.next_line()) {
        if (auto item = parse_line(*line, malformed_)) return item;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                               std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      const int fd = peer_.valid() ? peer_.fd() : listener_.fd();
      pollfd pfd{fd, POLLIN, 0};
      int n = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) return std::nullopt;
      if (!peer_.valid()) {
        int c = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
        if (c >= 0) peer_ = Socket(c);
        continue;
      }
      char buf[8192];
      ssize_t got = ::recv(peer_.fd(), buf, sizeof(buf), 0);
      if (got < 0 && errno == EINTR) continue;
      if (got <= 0) {
        // Producer went away; a later one may connect.
        peer_.close();
        continue;
      }
      lines_.feed(buf, static_cast<std::size_t>(got));
    }
  }

  std::uint64_t malformed() const override { return malformed_; }

 private:
  void ensure_listening() {
    if (listener_.valid()) return;
    Endpoint ep;
    try {
      ep = Endpoint::parse(address_);
    } catch (const Error& e) {
      fail(ErrorCode::kInputUnavailable, "bad tcp-lines address '" + address_ + "'");
    }
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    int one = 1;
    ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr;
    try {
      addr = ipv4(ep);
    } catch (const Error& e) {
      fail(ErrorCode::kInputUnavailable, e.detail());
    }
    if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(s.fd(), 8) != 0) {
      fail(ErrorCode::kInputUnavailable, "listen on " + address_ + ": " + std::strerror(errno));
    }
    listener_ = std::move(s);
  }

  std::string address_;
  Socket listener_;
  Socket peer_;
  LineBuffer lines_;
  std::uint64_t malformed_ = 0;
};

class TcpLinesOutput final : public OutputHandler {
 public:
  explicit TcpLinesOutput(std::string address) : address_(std::move(address)) {}

  void publish(const Json& item) override {
    if (!sock_.valid()) connect();
    try {
      bus::write_all(sock_.fd(), item.dump() + "\n");
    } catch (const Error&) {
      sock_.close();
      throw;
    }
  }

 private:
  void connect() {
    const auto addr = ipv4(Endpoint::parse(address_));
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
      fail(ErrorCode::kConnectionRefused, "connect " + address_ + ": " + std::strerror(errno));
    }
    sock_ = std::move(s);
  }

  std::string address_;
  Socket sock_;
};

class FileInput final : public InputHandler {
 public:
  explicit FileInput(std::string path) : path_(std::move(path)) {}

  std::optional<Json> next(std::chrono::milliseconds wait) override {
    const auto deadline = std::chrono::steady_clock::now() + wait;
    for (;;) {
      while (auto line = lines_.next_line()) {
        if (auto item = parse_line(*line, malformed_)) return item;
      }
      if (read_more() > 0) continue;
      if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
      std::this_thread::sleep_for(5ms);
    }
  }

  std::uint64_t malformed() const override { return malformed_; }

 private:
  std::size_t read_more() {
    std::ifstream in(path_, std::ios::binary);
    if (!in) fail(ErrorCode::kInputUnavailable, "cannot open " + path_);
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::uint64_t>(in.tellg());
    if (size <= offset_) return 0;
    in.seekg(static_cast<std::streamoff>(offset_));
    std::string chunk(size - offset_, '\0');
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    offset_ += got;
    lines_.feed(chunk.data(), got);
    return got;
  }

  std::string path_;
  std::uint64_t offset_ = 0;
  LineBuffer lines_;
  std::uint64_t malformed_ = 0;
};

class FileOutput final : public OutputHandler {
 public:
  explicit FileOutput(std::string path) : path_(std::move(path)) {}

  void publish(const Json& item) override {
    if (!out_.is_open()) {
      out_.open(path_, std::ios::app | std::ios::binary);
      if (!out_) fail(ErrorCode::kInputUnavailable, "cannot open " + path_ + " for append");
    }
    out_ << item.dump() << '\n';
    out_.flush();
    if (!out_) {
      out_.close();
      fail(ErrorCode::kInternal, "write to " + path_ + " failed");
    }
  }

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace

std::optional<std::string> LineBuffer::next_line() {
  auto pos = buf_.find('\n');
  if (pos == std::string::npos) return std::nullopt;
  std::string line = buf_.substr(0, pos);
  buf_.erase(0, pos + 1);
  return line;
}

std::unique_ptr<InputHandler> make_tcp_lines_input(const std::string& address) {
  return std::make_unique<TcpLinesInput>(address);
}
std::unique_ptr<OutputHandler> make_tcp_lines_output(const std::string& address) {
  return std::make_unique<TcpLinesOutput>(address);
}
std::unique_ptr<InputHandler> make_file_input(const std::string& path) { return std::make_unique<FileInput>(path); }
std::unique_ptr<OutputHandler> make_file_output(const std::string& path) {
  return std::make_unique<FileOutput>(path);
}

ProtocolRegistry ProtocolRegistry::with_builtins() {
  ProtocolRegistry r;
  r.register_protocol("tcp-lines", {make_tcp_lines_input, make_tcp_lines_output});
  r.register_protocol("file", {make_file_input, make_file_output});
  return r;
}

void ProtocolRegistry::register_protocol(const std::string& id, ProtocolFactory factory) {
  if (!factories_.emplace(id, std::move(factory)).second) {
    fail(ErrorCode::kDuplicateRegistration, "protocol '" + id + "' is already registered");
  }
}

const ProtocolFactory& ProtocolRegistry::find(const std::string& id) const {
  auto it = factories_.find(id);
  if (it == factories_.end()) fail(ErrorCode::kUnknownProtocol, "no protocol handler named '" + id + "'");
  return it->second;
}

}  // namespace cellkit::engine
