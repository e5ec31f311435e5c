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

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "cellkit/bus/message.hpp"
#include "cellkit/core/error.hpp"
#include "cellkit/core/types.hpp"

namespace cellkit::node {

using Json = nlohmann::json;
using TimerId = std::uint64_t;

// Outcome of a request: a response message, or a transport-level error
// (Timeout, ConnectionRefused, MalformedResponse).
struct RpcResult {
  std::optional<bus::Message> response;
  std::optional<Error> error;

  bool ok() const noexcept { return response.has_value(); }
  // True for a delivered error.rejected.
  bool rejected() const noexcept { return response && response->is_rejection(); }
  std::string reason() const;
};

using RpcCallback = std::function<void(RpcResult)>;

// What a node's logic may ask of the world. Every callback, timer and
// inbound event runs on the node's single command queue, so node logic is
// written single-threaded. Real sockets and the simulator both implement
// this interface.
class NodeEnv {
 public:
  virtual ~NodeEnv() = default;

  // Milliseconds on the environment's clock.
  virtual std::int64_t now_ms() const = 0;

  virtual void post(std::function<void()> fn) = 0;
  virtual TimerId schedule(std::int64_t delay_ms, std::function<void()> fn) = 0;
  virtual void cancel(TimerId id) = 0;

  virtual void request(const Endpoint& to, bus::Message message, std::int64_t timeout_ms, RpcCallback cb) = 0;

  // PUT /registration on a registry-switch endpoint. cb receives the HTTP
  // status, or 0 when no response arrived.
  virtual void switch_registration(const Endpoint& to, const Endpoint& target, std::int64_t timeout_ms,
                                   std::function<void(int status)> cb) = 0;

  virtual void multicast(const Json& datagram) = 0;

  // Runs `work` on the node's deployment queue, then `done` on the command
  // queue. Deployment work never runs concurrently with itself.
  virtual void run_blocking(std::function<void()> work, std::function<void()> done) = 0;

  // Fresh identifier (hex); seeded in simulation.
  virtual std::string random_id() = 0;

  virtual void log(std::string_view event, const Json& fields) = 0;
};

}  // namespace cellkit::node
