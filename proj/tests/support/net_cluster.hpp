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

// Helpers for tests that run real NetNodes on loopback.

#include <chrono>
#include <functional>
#include <memory>
#include <random>
#include <thread>

#include "cellkit/bus/tcp.hpp"
#include "cellkit/net/net_node.hpp"

namespace netfix {

using namespace cellkit;

// Cadences shortened so a whole cell forms in well under a second.
inline node::Timing fast_timing() {
  node::Timing t;
  t.presence_interval_ms = 100;
  t.presence_expiry_ms = 300;
  t.ping_interval_ms = 250;
  t.sync_interval_ms = 250;
  t.discovery_window_ms = 300;
  t.request_timeout_ms = 1000;
  t.retry_interval_ms = 200;
  t.switch_timeout_ms = 2000;
  return t;
}

// A multicast port nobody else in this test run is using.
inline net::MulticastGroup private_group() {
  static std::mt19937 rng(std::random_device{}());
  return {"239.255.42.99", static_cast<std::uint16_t>(std::uniform_int_distribution<int>(20000, 60000)(rng))};
}

inline bool eventually(const std::function<bool()>& pred, int timeout_ms = 5000) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < deadline) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return pred();
}

inline net::NetNodeOptions options(NodeRole role, std::string id, const net::MulticastGroup& group) {
  net::NetNodeOptions o;
  o.role = role;
  o.node_id = NodeId(std::move(id));
  o.group = group;
  o.timing = fast_timing();
  return o;
}

inline int cell_size(net::NetNode& n) {
  return n.inspect([](const node::Node& x) { return x.registry() ? static_cast<int>(x.registry()->size()) : 0; });
}

inline std::optional<std::string> cell_of(net::NetNode& n) {
  return n.inspect([](const node::Node& x) -> std::optional<std::string> {
    if (auto c = x.cell()) return c->value;
    return std::nullopt;
  });
}

inline node::NodeState state_of(net::NetNode& n) {
  return n.inspect([](const node::Node& x) { return x.state(); });
}

inline bus::Message rpc(const Endpoint& to, const std::string& type, Json payload, int timeout_ms = 20000) {
  return bus::send_request(to, bus::make_request(type, std::move(payload)), std::chrono::milliseconds(timeout_ms));
}

}  // namespace netfix
