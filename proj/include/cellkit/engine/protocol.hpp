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

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

namespace cellkit::engine {

using Json = nlohmann::json;

// Source of newline-delimited JSON items.
class InputHandler {
 public:
  virtual ~InputHandler() = default;
  // Waits at most `wait` for one item; nullopt if none arrived. Throws
  // kInputUnavailable when the source cannot be opened or read.
  virtual std::optional<Json> next(std::chrono::milliseconds wait) = 0;
  // Lines that were not valid JSON and were dropped.
  virtual std::uint64_t malformed() const { return 0; }
};

class OutputHandler {
 public:
  virtual ~OutputHandler() = default;
  // Throws on failure; the caller decides whether to retry.
  virtual void publish(const Json& item) = 0;
};

struct ProtocolFactory {
  std::function<std::unique_ptr<InputHandler>(const std::string& address)> input;
  std::function<std::unique_ptr<OutputHandler>(const std::string& address)> output;
};

class ProtocolRegistry {
 public:
  // "tcp-lines": the input listens on host:port, the output connects to it.
  // "file": the input tails a file from its start, the output appends.
  static ProtocolRegistry with_builtins();

  // Throws kDuplicateRegistration.
  void register_protocol(const std::string& id, ProtocolFactory factory);
  bool contains(const std::string& id) const { return factories_.contains(id); }
  // Throws kUnknownProtocol.
  const ProtocolFactory& find(const std::string& id) const;

 private:
  std::map<std::string, ProtocolFactory> factories_;
};

std::unique_ptr<InputHandler> make_tcp_lines_input(const std::string& address);
std::unique_ptr<OutputHandler> make_tcp_lines_output(const std::string& address);
std::unique_ptr<InputHandler> make_file_input(const std::string& path);
std::unique_ptr<OutputHandler> make_file_output(const std::string& path);

// Splits a byte stream into lines; used by the handlers and by tests that
// play the far side of a tcp-lines link.
class LineBuffer {
 public:
  void feed(const char* data, std::size_t n) { buf_.append(data, n); }
  std::optional<std::string> next_line();

 private:
  std::string buf_;
};

}  // namespace cellkit::engine
