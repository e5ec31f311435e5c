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
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cellkit/deploy/backend.hpp"
#include "cellkit/deploy/image_cache.hpp"
#include "cellkit/deploy/instance_manager.hpp"
#include "cellkit/node/node.hpp"

namespace cellkit::sim {

using Json = nlohmann::json;

struct LatencyModel {
  enum class Kind { kFixed, kUniform };
  Kind kind = Kind::kFixed;
  // kFixed uses min_ms.
  std::int64_t min_ms = 5;
  std::int64_t max_ms = 5;
};

// Cuts every link between a node in `a` and a node in `b` from at_ms on,
// until until_ms if given.
struct PartitionSpec {
  std::set<std::string> a;
  std::set<std::string> b;
  std::int64_t at_ms = 0;
  std::optional<std::int64_t> until_ms;
};

struct SimConfig {
  std::uint64_t seed = 1;
  LatencyModel latency;
  // Applies to multicast datagrams only; streams are reliable.
  double drop_rate = 0.0;
  std::vector<PartitionSpec> partitions;
  // Virtual duration of one deployment-queue job.
  std::int64_t deploy_ms = 20;
  node::Timing timing;
};

struct SimNodeSpec {
  std::string id;
  NodeRole role = NodeRole::kPrimary;
  std::string arch = "amd64";
  ResourceVector capacity{4000, 8 * kGiB, 100 * kGiB, 0};
  ResourceVector background;
  GpuInventory gpu;
  // Join path 1 target.
  std::optional<std::string> coordinator;
  // Deployments of these tasks fail on this node.
  std::set<std::string> fail_tasks;
};

struct MessageCounts {
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  std::uint64_t total() const noexcept { return sent + received; }
};

// A virtual-time network of nodes running the production node logic.
// Single-threaded; every run is a pure function of the seed and the calls
// made on it.
class Simulation {
 public:
  explicit Simulation(SimConfig config, SkillLibrary library = {});
  ~Simulation();

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  // Throws kScriptError on a duplicate id.
  node::Node& add_node(const SimNodeSpec& spec);
  bool has_node(const std::string& id) const { return nodes_.contains(id); }
  // Throws kScriptError for undeclared nodes.
  node::Node& node(const std::string& id);
  const node::Node& node(const std::string& id) const;
  std::vector<std::string> node_ids() const;
  deploy::FakeBackend& backend(const std::string& id);
  deploy::InstanceManager& runtime(const std::string& id);

  void start(const std::string& id);
  void stop(const std::string& id);
  bool up(const std::string& id) const;

  std::int64_t now() const noexcept { return now_; }
  void run_for(std::int64_t ms);
  // Runs until pred() holds (checked after each event) or `limit_ms` of
  // virtual time has passed. Returns pred().
  bool run_until(const std::function<bool()>& pred, std::int64_t limit_ms);

  void partition(const std::set<std::string>& a, const std::set<std::string>& b);
  void heal();
  bool partitioned(const std::string& x, const std::string& y) const;
  bool any_partition() const noexcept { return !partitions_.empty(); }

  // Sends a request from an operator outside every partition and runs the
  // simulation until it is answered or times out.
  node::RpcResult call(const std::string& target, bus::Message message, std::int64_t timeout_ms = 30000);
  // Same, without running the simulation; `cb` fires from a later step.
  void send(const std::string& target, bus::Message message, std::int64_t timeout_ms, node::RpcCallback cb);

  // One NDJSON line per event, in order.
  const std::vector<std::string>& trace() const noexcept { return trace_; }
  void record(const std::string& event, Json fields);

  const MessageCounts& counts(const std::string& id) const;
  void reset_counts();
  std::uint64_t oversize_datagrams() const noexcept { return oversize_; }
  // Coordinator announcements whose cell_size differed from the registry.
  std::uint64_t unsound_announcements() const noexcept { return unsound_; }

  // cell.info of every running coordinator, keyed by coordinator id.
  Json registries() const;

  static Endpoint control_endpoint(const std::string& id) { return Endpoint{id, 7000}; }
  static Endpoint switch_endpoint(const std::string& id) { return Endpoint{id, 7001}; }

 private:
  class Env;
  struct SimNode;
  using Key = std::pair<std::int64_t, std::uint64_t>;

  node::TimerId at(std::int64_t when, std::function<void()> fn);
  void cancel(node::TimerId id);
  std::int64_t latency();
  std::int64_t link_time(const std::string& from, const std::string& to);
  SimNode* by_control(const Endpoint& ep);
  SimNode* by_switch(const Endpoint& ep);
  bool step();

  void send_request(const std::string& from, const Endpoint& to, bus::Message message, std::int64_t timeout_ms,
                    node::RpcCallback cb);
  void send_switch(const std::string& from, const Endpoint& to, const Endpoint& target, std::int64_t timeout_ms,
                   std::function<void(int)> cb);
  void send_datagram(const std::string& from, const Json& datagram);
  void run_blocking(const std::string& id, std::function<void()> work, std::function<void()> done);

  SimConfig config_;
  SkillLibrary library_;
  std::mt19937_64 rng_;
  std::int64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::map<Key, std::function<void()>> queue_;
  std::map<node::TimerId, Key> timers_;
  std::map<std::pair<std::string, std::string>, std::int64_t> link_clock_;
  std::vector<std::pair<std::set<std::string>, std::set<std::string>>> partitions_;
  std::map<std::string, std::unique_ptr<SimNode>> nodes_;
  std::map<std::string, MessageCounts> counts_;
  std::vector<std::string> trace_;
  std::uint64_t oversize_ = 0;
  std::uint64_t unsound_ = 0;
};

struct ScenarioResult {
  std::vector<std::string> trace;
  Json registries;
  // One entry per request-issuing event: {index, op, ok, response}.
  Json results = Json::array();
};

// Script format:
//   {"seed": n, "latency": {"kind": "fixed"|"uniform", "min_ms", "max_ms"},
//    "drop_rate": p, "deploy_ms": n, "timing": {...}, "library": [descriptors],
//    "partitions": [{"a": [...], "b": [...], "at_ms": t, "until_ms": t}],
//    "nodes": [{"id", "role", "arch", "capacity", "background", "gpu",
//               "coordinator", "fail_tasks"}],
//    "events": [{"op": ...}, ...]}
// Ops: start, stop, join, leave, transfer, submit, terminate, partition,
// heal, settle. Throws kScriptError for undeclared nodes or malformed
// events. `seed`, when given, overrides the script's.
ScenarioResult run_scenario(const Json& script, std::optional<std::uint64_t> seed = std::nullopt);

SimConfig sim_config_from_json(const Json& script);
SimNodeSpec sim_node_from_json(const Json& j);

}  // namespace cellkit::sim
