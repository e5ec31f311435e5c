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
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cellkit/bus/handler_registry.hpp"
#include "cellkit/core/descriptor.hpp"
#include "cellkit/deploy/instance_manager.hpp"
#include "cellkit/node/env.hpp"
#include "cellkit/node/presence.hpp"
#include "cellkit/node/registry.hpp"
#include "cellkit/sched/scheduler.hpp"

namespace cellkit::node {

struct Timing {
  std::int64_t presence_interval_ms = 2000;
  // Three missed announcements.
  std::int64_t presence_expiry_ms = 6000;
  std::int64_t ping_interval_ms = 5000;
  int ping_miss_limit = 3;
  std::int64_t sync_interval_ms = 5000;
  std::int64_t request_timeout_ms = 1000;
  std::int64_t deploy_timeout_ms = 15000;
  // How long a freshly started primary listens for coordinators.
  std::int64_t discovery_window_ms = 2500;
  std::int64_t switch_timeout_ms = 4000;
  std::int64_t retry_interval_ms = 1000;
  std::int64_t gc_interval_ms = 60000;
};

struct NodeConfig {
  NodeId id;
  NodeRole role = NodeRole::kPrimary;
  std::string arch = "amd64";
  Endpoint control_endpoint;
  Endpoint registry_switch_endpoint;
  ResourceVector capacity;
  // Load not managed by the cell; reported in every status sync.
  ResourceVector background_usage;
  GpuInventory gpu;
  // Join path 1.
  std::optional<Endpoint> coordinator_endpoint;
  Timing timing;
  sched::SchedulerConfig scheduler;
  // Consulted by coordinators when placing tasks.
  SkillLibrary library;
};

enum class NodeState { kStopped, kDiscovering, kJoining, kMember, kIndependent, kCoordinating };

std::string_view to_string(NodeState s);

// A node's control-plane logic. Everything here, including construction,
// runs on the node's command queue as provided by NodeEnv.
class Node {
 public:
  using SwitchReply = std::function<void(int status, Json body)>;
  using Observer = std::function<void(std::string_view event, const Json& fields)>;

  Node(NodeConfig config, NodeEnv& env, deploy::InstanceManager* runtime = nullptr);
  ~Node();

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  void start();
  // Coordinators tell their members they are going away; members leave
  // their cell. `done` runs once the node is quiet.
  void stop(std::function<void()> done = {});

  // Primary-initiated departure: leaves the cell and runs independently.
  void leave();
  // Re-runs the join procedure from independent mode.
  void rejoin();

  // Inbound traffic.
  void on_request(const bus::Message& message, bus::Reply reply);
  void on_registration_switch(const Endpoint& target, SwitchReply reply);
  void on_datagram(const Json& datagram);

  const NodeConfig& config() const noexcept { return config_; }
  NodeState state() const noexcept { return state_; }
  // The node's coordinator; the node itself for coordinators.
  std::optional<NodeId> cell() const;
  std::optional<Endpoint> cell_endpoint() const;
  const CellRegistry* registry() const noexcept { return registry_.get(); }
  const PresenceCache& presence() const noexcept { return presence_; }
  bool switching() const noexcept { return switching_; }
  // Coordinators whose leave/abort notice is still being retried.
  const std::set<Endpoint>& pending_departures() const noexcept { return pending_leaves_; }
  std::optional<std::string> last_error() const { return last_error_; }
  NodeRecord self_record() const;

  // Called for every notable state change (sim traces, tests).
  void set_observer(Observer observer) { observer_ = std::move(observer); }

 private:
  struct CellRef {
    NodeId id;
    Endpoint endpoint;
  };
  struct Candidate {
    int size;
    NodeId id;
    Endpoint endpoint;
  };
  using JoinDone = std::function<void(std::optional<NodeId> coordinator, std::string reason)>;

  void build_handlers();
  void emit(std::string_view event, Json fields);
  // Wraps a callback so it is dropped once the node is destroyed, or
  // (for guard) once it has been stopped or restarted.
  template <class F>
  auto guard(F f) {
    return [life = std::weak_ptr<int>(life_), epoch = epoch_, this, f = std::move(f)](auto&&... args) mutable {
      auto alive = life.lock();
      if (!alive || epoch != epoch_) return;
      f(std::forward<decltype(args)>(args)...);
    };
  }
  template <class F>
  auto guard_life(F f) {
    return [life = std::weak_ptr<int>(life_), f = std::move(f)](auto&&... args) mutable {
      auto alive = life.lock();
      if (!alive) return;
      f(std::forward<decltype(args)>(args)...);
    };
  }

  // --- membership (node.cpp) ---
  void begin_join();
  void discover(std::set<Endpoint> exclude);
  void rank_and_join(std::vector<PresenceAnnouncement> candidates, std::set<Endpoint> tried, bool requeried);
  void try_candidates(std::vector<Candidate> ranked, std::set<Endpoint> tried, bool requeried);
  void join(const Endpoint& target, JoinDone done);
  void become_member(const NodeId& coordinator, const Endpoint& endpoint);
  void go_independent(const std::string& reason);
  void send_departure(const Endpoint& to, const char* reason, std::function<void()> first_outcome);
  void schedule_presence();
  void announce_presence();
  void schedule_sync();
  void send_sync();
  Json status_payload();

  // --- coordinator (coordinator.cpp) ---
  void schedule_pings();
  void ping_members();
  void handle_join(const bus::Message& m, bus::Reply reply);
  void handle_leave(const bus::Message& m, bus::Reply reply);
  void handle_query(const bus::Message& m, bus::Reply reply);
  void handle_status(const bus::Message& m, bus::Reply reply);
  void handle_transfer(const bus::Message& m, bus::Reply reply);
  void handle_terminate(const bus::Message& m, bus::Reply reply);
  void plan_tasks(const bus::Message& m, bus::Reply reply);
  void dispatch_plan(const bus::Message& m, bus::Reply reply);
  void switch_member(const NodeId& primary, const Endpoint& switch_endpoint, const PresenceAnnouncement& dest,
                     bool member, const std::string& msg_id, bus::Reply reply);
  void find_owner(const NodeId& primary, std::function<void(std::optional<PresenceAnnouncement>)> done);

  // --- any node (node.cpp) ---
  void handle_announce(const bus::Message& m, bus::Reply reply);
  void handle_deploy(const bus::Message& m, bus::Reply reply);
  void handle_stop(const bus::Message& m, bus::Reply reply);
  void handle_coordinator_leaving(const bus::Message& m, bus::Reply reply);

  NodeConfig config_;
  NodeEnv& env_;
  deploy::InstanceManager* runtime_;
  bus::HandlerRegistry handlers_;
  Observer observer_;

  std::shared_ptr<int> life_ = std::make_shared<int>(0);
  std::uint64_t epoch_ = 0;

  NodeState state_ = NodeState::kStopped;
  PresenceCache presence_;
  std::optional<CellRef> cell_;
  // Where a join or switch is heading, if one is under way.
  std::optional<Endpoint> pending_endpoint_;
  bool switching_ = false;
  std::set<Endpoint> pending_leaves_;
  std::uint64_t sync_seq_ = 0;
  int sync_failures_ = 0;
  std::optional<std::string> last_error_;

  std::unique_ptr<CellRegistry> registry_;
  // Primaries with a registration switch under way, and where to.
  std::map<NodeId, NodeId> in_flight_;
  TimerId presence_timer_ = 0;
  TimerId sync_timer_ = 0;
  TimerId ping_timer_ = 0;
  TimerId discovery_timer_ = 0;
  TimerId gc_timer_ = 0;
};

}  // namespace cellkit::node
