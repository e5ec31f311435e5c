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

#include "cellkit/sim/simnet.hpp"

#include <cstdio>

#include "cellkit/bus/vocabulary.hpp"

namespace cellkit::sim {

class Simulation::Env final : public node::NodeEnv {
 public:
  Env(Simulation& sim, std::string id) : sim_(sim), id_(std::move(id)) {}

  std::int64_t now_ms() const override { return sim_.now_; }
  void post(std::function<void()> fn) override { sim_.at(sim_.now_, std::move(fn)); }
  node::TimerId schedule(std::int64_t delay_ms, std::function<void()> fn) override {
    return sim_.at(sim_.now_ + std::max<std::int64_t>(delay_ms, 0), std::move(fn));
  }
  void cancel(node::TimerId id) override { sim_.cancel(id); }
  void request(const Endpoint& to, bus::Message message, std::int64_t timeout_ms, node::RpcCallback cb) override {
    sim_.send_request(id_, to, std::move(message), timeout_ms, std::move(cb));
  }
  void switch_registration(const Endpoint& to, const Endpoint& target, std::int64_t timeout_ms,
                           std::function<void(int)> cb) override {
    sim_.send_switch(id_, to, target, timeout_ms, std::move(cb));
  }
  void multicast(const Json& datagram) override { sim_.send_datagram(id_, datagram); }
  void run_blocking(std::function<void()> work, std::function<void()> done) override {
    sim_.run_blocking(id_, std::move(work), std::move(done));
  }
  std::string random_id() override {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(sim_.rng_()));
    return buf;
  }
  void log(std::string_view event, const Json& fields) override { sim_.record(std::string(event), fields); }

 private:
  Simulation& sim_;
  std::string id_;
};

struct Simulation::SimNode {
  SimNodeSpec spec;
  std::unique_ptr<Env> env;
  deploy::FakeBackend backend;
  std::unique_ptr<deploy::ImageCache> cache;
  std::unique_ptr<deploy::InstanceManager> manager;
  std::unique_ptr<node::Node> node;
  std::int64_t deploy_busy_until = 0;
};

Simulation::Simulation(SimConfig config, SkillLibrary library)
    : config_(std::move(config)), library_(std::move(library)), rng_(config_.seed) {
  for (const auto& p : config_.partitions) {
    at(p.at_ms, [this, p] { partition(p.a, p.b); });
    if (p.until_ms) at(*p.until_ms, [this] { heal(); });
  }
}

Simulation::~Simulation() {
  // Nodes may hold callbacks into each other; drop them before the queue.
  queue_.clear();
  for (auto& [_, n] : nodes_) n->node.reset();
}

node::Node& Simulation::add_node(const SimNodeSpec& spec) {
  if (spec.id.empty() || nodes_.contains(spec.id) || spec.id == "operator") {
    fail(ErrorCode::kScriptError, "node id '" + spec.id + "' is empty, reserved or declared twice");
  }
  auto n = std::make_unique<SimNode>();
  n->spec = spec;
  n->env = std::make_unique<Env>(*this, spec.id);
  n->backend.fail_tasks = spec.fail_tasks;
  auto clock = [this] { return now_; };
  n->cache = std::make_unique<deploy::ImageCache>(clock);
  n->manager = std::make_unique<deploy::InstanceManager>(NodeId(spec.id), n->backend, *n->cache,
                                                         deploy::ManagerOptions{3600 * 1000, clock});
  node::NodeConfig cfg;
  cfg.id = NodeId(spec.id);
  cfg.role = spec.role;
  cfg.arch = spec.arch;
  cfg.control_endpoint = control_endpoint(spec.id);
  cfg.registry_switch_endpoint = switch_endpoint(spec.id);
  cfg.capacity = spec.capacity;
  cfg.background_usage = spec.background;
  cfg.gpu = spec.gpu;
  if (spec.coordinator) cfg.coordinator_endpoint = control_endpoint(*spec.coordinator);
  cfg.timing = config_.timing;
  cfg.library = library_;
  n->node = std::make_unique<node::Node>(std::move(cfg), *n->env, n->manager.get());
  counts_[spec.id];
  auto& ref = *n->node;
  nodes_.emplace(spec.id, std::move(n));
  return ref;
}

node::Node& Simulation::node(const std::string& id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) fail(ErrorCode::kScriptError, "undeclared node '" + id + "'");
  return *it->second->node;
}

const node::Node& Simulation::node(const std::string& id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) fail(ErrorCode::kScriptError, "undeclared node '" + id + "'");
  return *it->second->node;
}

std::vector<std::string> Simulation::node_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : nodes_) out.push_back(id);
  return out;
}

deploy::FakeBackend& Simulation::backend(const std::string& id) {
  node(id);
  return nodes_.at(id)->backend;
}

deploy::InstanceManager& Simulation::runtime(const std::string& id) {
  node(id);
  return *nodes_.at(id)->manager;
}

void Simulation::start(const std::string& id) { node(id).start(); }

void Simulation::stop(const std::string& id) {
  auto& n = *nodes_.at((node(id), id));
  n.node->stop([&n] { n.manager->stop_all(); });
}

bool Simulation::up(const std::string& id) const {
  auto it = nodes_.find(id);
  return it != nodes_.end() && it->second->node->state() != node::NodeState::kStopped;
}

// ---------------------------------------------------------------- clock

node::TimerId Simulation::at(std::int64_t when, std::function<void()> fn) {
  const Key key{std::max(when, now_), ++seq_};
  queue_.emplace(key, std::move(fn));
  timers_.emplace(key.second, key);
  return key.second;
}

void Simulation::cancel(node::TimerId id) {
  auto it = timers_.find(id);
  if (it == timers_.end()) return;
  queue_.erase(it->second);
  timers_.erase(it);
}

bool Simulation::step() {
  if (queue_.empty()) return false;
  auto it = queue_.begin();
  now_ = it->first.first;
  auto fn = std::move(it->second);
  timers_.erase(it->first.second);
  queue_.erase(it);
  fn();
  return true;
}

void Simulation::run_for(std::int64_t ms) {
  const auto end = now_ + ms;
  while (!queue_.empty() && queue_.begin()->first.first <= end) step();
  now_ = end;
}

bool Simulation::run_until(const std::function<bool()>& pred, std::int64_t limit_ms) {
  const auto end = now_ + limit_ms;
  while (!pred()) {
    if (queue_.empty() || queue_.begin()->first.first > end) {
      now_ = std::max(now_, end);
      return pred();
    }
    step();
  }
  return true;
}

// ---------------------------------------------------------------- network

std::int64_t Simulation::latency() {
  if (config_.latency.kind == LatencyModel::Kind::kFixed) return config_.latency.min_ms;
  std::uniform_int_distribution<std::int64_t> d(config_.latency.min_ms, config_.latency.max_ms);
  return d(rng_);
}

std::int64_t Simulation::link_time(const std::string& from, const std::string& to) {
  // Streams between a pair of nodes deliver in order.
  auto& last = link_clock_[{from, to}];
  last = std::max(now_ + latency(), last);
  return last;
}

void Simulation::partition(const std::set<std::string>& a, const std::set<std::string>& b) {
  partitions_.emplace_back(a, b);
  record("net.partition", {{"a", a}, {"b", b}});
}

void Simulation::heal() {
  partitions_.clear();
  record("net.heal", Json::object());
}

bool Simulation::partitioned(const std::string& x, const std::string& y) const {
  for (const auto& [a, b] : partitions_) {
    if ((a.contains(x) && b.contains(y)) || (a.contains(y) && b.contains(x))) return true;
  }
  return false;
}

Simulation::SimNode* Simulation::by_control(const Endpoint& ep) {
  auto it = nodes_.find(ep.host);
  if (it == nodes_.end() || ep.port != control_endpoint(ep.host).port) return nullptr;
  return it->second.get();
}

Simulation::SimNode* Simulation::by_switch(const Endpoint& ep) {
  auto it = nodes_.find(ep.host);
  if (it == nodes_.end() || ep.port != switch_endpoint(ep.host).port) return nullptr;
  return it->second.get();
}

void Simulation::send_request(const std::string& from, const Endpoint& to, bus::Message message,
                              std::int64_t timeout_ms, node::RpcCallback cb) {
  auto done = std::make_shared<bool>(false);
  auto finish = [done, cb = std::move(cb)](node::RpcResult r) {
    if (*done) return;
    *done = true;
    cb(std::move(r));
  };
  at(now_ + timeout_ms, [finish, to] {
    finish(node::RpcResult{std::nullopt, Error(ErrorCode::kTimeout, "no response from " + to.str())});
  });
  SimNode* dst = by_control(to);
  ++counts_[from].sent;
  if (!dst) {
    at(now_ + latency(), [finish, to] {
      finish(node::RpcResult{std::nullopt, Error(ErrorCode::kConnectionRefused, "nothing listens on " + to.str())});
    });
    return;
  }
  const auto dst_id = dst->spec.id;
  if (partitioned(from, dst_id)) return;
  at(link_time(from, dst_id), [this, from, dst_id, to, message = std::move(message), finish] {
    if (partitioned(from, dst_id)) return;
    if (!up(dst_id)) {
      finish(node::RpcResult{std::nullopt, Error(ErrorCode::kConnectionRefused, "nothing listens on " + to.str())});
      return;
    }
    ++counts_[dst_id].received;
    nodes_.at(dst_id)->node->on_request(message, [this, from, dst_id, finish](bus::Message response) {
      ++counts_[dst_id].sent;
      if (partitioned(from, dst_id)) return;
      at(link_time(dst_id, from), [this, from, dst_id, finish, response = std::move(response)] {
        if (partitioned(from, dst_id)) return;
        ++counts_[from].received;
        finish(node::RpcResult{response, std::nullopt});
      });
    });
  });
}

void Simulation::send_switch(const std::string& from, const Endpoint& to, const Endpoint& target,
                             std::int64_t timeout_ms, std::function<void(int)> cb) {
  auto done = std::make_shared<bool>(false);
  auto finish = [done, cb = std::move(cb)](int status) {
    if (*done) return;
    *done = true;
    cb(status);
  };
  at(now_ + timeout_ms, [finish] { finish(0); });
  SimNode* dst = by_switch(to);
  ++counts_[from].sent;
  if (!dst) {
    at(now_ + latency(), [finish] { finish(0); });
    return;
  }
  const auto dst_id = dst->spec.id;
  if (partitioned(from, dst_id)) return;
  at(link_time(from, dst_id), [this, from, dst_id, target, finish] {
    if (partitioned(from, dst_id)) return;
    if (!up(dst_id)) {
      finish(0);
      return;
    }
    ++counts_[dst_id].received;
    nodes_.at(dst_id)->node->on_registration_switch(target, [this, from, dst_id, finish](int status, Json) {
      ++counts_[dst_id].sent;
      if (partitioned(from, dst_id)) return;
      at(link_time(dst_id, from), [this, from, dst_id, finish, status] {
        if (partitioned(from, dst_id)) return;
        ++counts_[from].received;
        finish(status);
      });
    });
  });
}

void Simulation::send_datagram(const std::string& from, const Json& datagram) {
  if (datagram.dump().size() > node::kMaxPresenceBytes) {
    ++oversize_;
    record("net.oversize", {{"from", from}});
    return;
  }
  if (datagram.value("role", "") == "coordinator") {
    const auto& sender = *nodes_.at(from)->node;
    if (!sender.registry() || datagram.value("cell_size", -1) != sender.registry()->size()) ++unsound_;
  }
  ++counts_[from].sent;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (auto& [id, n] : nodes_) {
    if (id == from || !up(id)) continue;
    if (config_.drop_rate > 0.0 && coin(rng_) < config_.drop_rate) continue;
    if (partitioned(from, id)) continue;
    at(now_ + latency(), [this, from, id, datagram] {
      if (partitioned(from, id) || !up(id)) return;
      ++counts_[id].received;
      nodes_.at(id)->node->on_datagram(datagram);
    });
  }
}

void Simulation::run_blocking(const std::string& id, std::function<void()> work, std::function<void()> done) {
  auto& n = *nodes_.at(id);
  const auto begin = std::max(now_, n.deploy_busy_until);
  n.deploy_busy_until = begin + config_.deploy_ms;
  at(begin, [this, end = n.deploy_busy_until, work = std::move(work), done = std::move(done)]() mutable {
    work();
    at(end, std::move(done));
  });
}

void Simulation::send(const std::string& target, bus::Message message, std::int64_t timeout_ms,
                      node::RpcCallback cb) {
  send_request("operator", control_endpoint((node(target), target)), std::move(message), timeout_ms, std::move(cb));
}

node::RpcResult Simulation::call(const std::string& target, bus::Message message, std::int64_t timeout_ms) {
  std::optional<node::RpcResult> result;
  send_request("operator", control_endpoint((node(target), target)), std::move(message), timeout_ms,
               [&result](node::RpcResult r) { result = std::move(r); });
  run_until([&] { return result.has_value(); }, timeout_ms + 1);
  if (!result) result = node::RpcResult{std::nullopt, Error(ErrorCode::kTimeout, "operator request timed out")};
  return *result;
}

// ---------------------------------------------------------------- output

void Simulation::record(const std::string& event, Json fields) {
  Json line{{"t", now_}, {"event", event}};
  if (fields.is_object()) {
    for (auto& [k, v] : fields.items()) line[k] = v;
  }
  trace_.push_back(line.dump());
}

const MessageCounts& Simulation::counts(const std::string& id) const {
  static const MessageCounts none;
  auto it = counts_.find(id);
  return it == counts_.end() ? none : it->second;
}

void Simulation::reset_counts() {
  for (auto& [_, c] : counts_) c = MessageCounts{};
}

Json Simulation::registries() const {
  Json out = Json::object();
  for (const auto& [id, n] : nodes_) {
    if (n->node->registry()) out[id] = n->node->registry()->cell_info(false);
  }
  return out;
}

}  // namespace cellkit::sim
