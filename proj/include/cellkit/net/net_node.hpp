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

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "cellkit/deploy/instance_manager.hpp"
#include "cellkit/net/event_loop.hpp"
#include "cellkit/node/node.hpp"

namespace cellkit::net {

struct MulticastGroup {
  std::string address = "239.255.42.99";
  std::uint16_t port = 7400;
};

struct NetNodeOptions {
  NodeRole role = NodeRole::kPrimary;
  // Derived from the interface's hardware address when absent.
  std::optional<NodeId> node_id;
  // Local IPv4 address every socket binds to and every endpoint advertises.
  std::string interface = "127.0.0.1";
  std::uint16_t control_port = 0;
  std::uint16_t switch_port = 0;
  std::optional<Endpoint> coordinator_endpoint;
  MulticastGroup group;
  // Coordinators serve POST /rpc next to PUT /registration.
  bool http_gateway = true;

  std::string arch = "amd64";
  ResourceVector capacity{4000, 8LL << 30, 100LL << 30, 0};
  ResourceVector background_usage;
  GpuInventory gpu;
  node::Timing timing;
  sched::SchedulerConfig scheduler;
  SkillLibrary library;

  // Instances run as processes under this directory; without it they are
  // only recorded (FakeBackend).
  std::optional<std::filesystem::path> runtime_root;
  std::filesystem::path engine_binary;

  // Receives every node event.
  std::function<void(std::string_view event, const Json& fields)> log;
};

// A node on real sockets: framed-JSON control endpoint, HTTP registry-switch
// endpoint, UDP multicast presence. Node logic runs on an EventLoop; network
// receive threads only post to it.
class NetNode {
 public:
  // Binds everything and starts the node. Throws kPortInUse or
  // kInvalidInterface; multicast trouble is logged and tolerated.
  explicit NetNode(NetNodeOptions options);
  ~NetNode();
  NetNode(const NetNode&) = delete;
  NetNode& operator=(const NetNode&) = delete;

  // Graceful: the node says goodbye, then every thread is joined.
  void stop();

  // Runs fn against the node on its command queue and returns the result.
  template <class F>
  auto inspect(F fn) {
    return loop_->call([this, fn = std::move(fn)]() mutable { return fn(static_cast<const node::Node&>(*node_)); });
  }
  // Same, with mutable access (leave, rejoin).
  template <class F>
  auto command(F fn) {
    return loop_->call([this, fn = std::move(fn)]() mutable { return fn(*node_); });
  }

  const NodeId& id() const noexcept { return id_; }
  Endpoint control_endpoint() const;
  Endpoint switch_endpoint() const;
  bool multicast_ok() const noexcept;

  deploy::InstanceManager& runtime() { return *manager_; }
  deploy::ImageCache& image_cache() { return *cache_; }

 private:
  class Env;
  struct Transport;

  NetNodeOptions options_;
  NodeId id_;
  std::unique_ptr<EventLoop> loop_;
  std::unique_ptr<deploy::ExecutionBackend> backend_;
  std::unique_ptr<deploy::ImageCache> cache_;
  std::unique_ptr<deploy::InstanceManager> manager_;
  std::unique_ptr<Env> env_;
  std::unique_ptr<Transport> transport_;
  std::unique_ptr<node::Node> node_;
  bool stopped_ = false;
};

// Every distinct announcement heard on the group within `window`, by node id.
std::vector<node::PresenceAnnouncement> listen_for_presence(const MulticastGroup& group, const std::string& interface,
                                                            std::chrono::milliseconds window);

// Is `address` assigned to a local interface? 0.0.0.0 is not accepted.
bool is_local_ipv4(const std::string& address);

// The hardware address of the interface holding `address`, if it has a
// non-zero one.
std::optional<std::array<std::uint8_t, 6>> interface_mac(const std::string& address);

}  // namespace cellkit::net
