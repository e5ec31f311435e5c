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

#include "cellkit/node/node.hpp"

#include <algorithm>

#include "internal.hpp"

namespace cellkit::node {

std::string RpcResult::reason() const {
  if (error) return std::string(error_code_name(error->code()));
  if (rejected()) return response->payload.value("reason_code", std::string(error_code_name(ErrorCode::kInternal)));
  return {};
}

std::string_view to_string(NodeState s) {
  switch (s) {
    case NodeState::kStopped: return "stopped";
    case NodeState::kDiscovering: return "discovering";
    case NodeState::kJoining: return "joining";
    case NodeState::kMember: return "member";
    case NodeState::kIndependent: return "independent";
    case NodeState::kCoordinating: return "coordinating";
  }
  return "unknown";
}

Node::Node(NodeConfig config, NodeEnv& env, deploy::InstanceManager* runtime)
    : config_(std::move(config)), env_(env), runtime_(runtime), presence_(config_.timing.presence_expiry_ms) {
  if (config_.id.empty()) fail(ErrorCode::kInvalidArgument, "node id must not be empty");
  build_handlers();
}

Node::~Node() = default;

NodeRecord Node::self_record() const {
  NodeRecord r;
  r.id = config_.id;
  r.role = config_.role;
  r.arch = config_.arch;
  r.control_endpoint = config_.control_endpoint;
  r.registry_switch_endpoint = config_.registry_switch_endpoint;
  r.capacity = config_.capacity;
  r.usage = config_.background_usage;
  r.gpu = config_.gpu;
  r.cell = cell();
  return r;
}

std::optional<NodeId> Node::cell() const {
  if (config_.role == NodeRole::kCoordinator) {
    if (state_ == NodeState::kStopped) return std::nullopt;
    return config_.id;
  }
  if (cell_) return cell_->id;
  return std::nullopt;
}

std::optional<Endpoint> Node::cell_endpoint() const {
  if (config_.role == NodeRole::kCoordinator) return config_.control_endpoint;
  if (cell_) return cell_->endpoint;
  return std::nullopt;
}

void Node::emit(std::string_view event, Json fields) {
  if (!fields.is_object()) fields = Json::object();
  fields["node"] = config_.id.value;
  env_.log(event, fields);
  if (observer_) observer_(event, fields);
}

void Node::build_handlers() {
  using bus::Message;
  using bus::Reply;
  auto bind = [this](void (Node::*fn)(const Message&, Reply)) {
    return [this, fn](const Message& m, Reply r) { (this->*fn)(m, std::move(r)); };
  };
  auto coordinator_only = [this](const Message& m, Reply) {
    fail(ErrorCode::kNotCoordinator, config_.id.value + " is not a coordinator and cannot handle " + m.msg_type);
  };
  const bool coord = config_.role == NodeRole::kCoordinator;
  auto reg = [&](const std::string& type, const std::string& out, std::function<void(const Message&, Reply)> fn) {
    handlers_.register_handler(type, bus::Handler{type, out, std::move(fn)});
  };

  reg(msg::kNodeAnnounce, std::string(bus::kAck), bind(&Node::handle_announce));
  reg(msg::kInstanceDeploy, std::string(bus::kAck), bind(&Node::handle_deploy));
  reg(msg::kInstanceStop, std::string(bus::kAck), bind(&Node::handle_stop));
  if (coord) {
    reg(msg::kCellJoin, std::string(bus::kAck), bind(&Node::handle_join));
    reg(msg::kCellLeave, std::string(bus::kAck), bind(&Node::handle_leave));
    reg(msg::kCellQuery, msg::kCellInfo, bind(&Node::handle_query));
    reg(msg::kInstanceStatus, std::string(bus::kAck), bind(&Node::handle_status));
    reg(msg::kCellTransfer, std::string(bus::kAck), bind(&Node::handle_transfer));
    reg(msg::kTaskTerminate, std::string(bus::kAck), bind(&Node::handle_terminate));
    handlers_.register_pipeline(msg::kTaskSubmit,
                                {bus::Handler{msg::kTaskSubmit, msg::kTaskPlan, bind(&Node::plan_tasks)},
                                 bus::Handler{msg::kTaskPlan, std::string(bus::kAck), bind(&Node::dispatch_plan)}});
  } else {
    reg(msg::kCellLeave, std::string(bus::kAck), bind(&Node::handle_coordinator_leaving));
    for (const auto* type : {msg::kCellJoin, msg::kCellQuery, msg::kInstanceStatus, msg::kCellTransfer,
                             msg::kTaskSubmit, msg::kTaskTerminate}) {
      reg(type, std::string(bus::kAck), coordinator_only);
    }
  }
  handlers_.seal();
}

// ---------------------------------------------------------------- lifecycle

void Node::start() {
  if (state_ != NodeState::kStopped) return;
  ++epoch_;
  last_error_.reset();
  sync_seq_ = 0;
  emit("node.start", {{"role", std::string(to_string(config_.role))}});
  if (config_.role == NodeRole::kCoordinator) {
    registry_ = std::make_unique<CellRegistry>(self_record());
    state_ = NodeState::kCoordinating;
    schedule_presence();
    schedule_pings();
    schedule_sync();
  } else {
    begin_join();
  }
  if (runtime_) {
    gc_timer_ = env_.schedule(config_.timing.gc_interval_ms, guard([this] {
                                env_.run_blocking([rt = runtime_] { rt->collect_garbage(); }, [] {});
                              }));
  }
}

void Node::stop(std::function<void()> done) {
  if (state_ == NodeState::kStopped) {
    if (done) done();
    return;
  }
  for (auto* t : {&presence_timer_, &sync_timer_, &ping_timer_, &discovery_timer_, &gc_timer_}) {
    if (*t) env_.cancel(*t);
    *t = 0;
  }
  std::vector<std::pair<Endpoint, bus::Message>> notices;
  if (config_.role == NodeRole::kCoordinator && registry_) {
    for (const auto& [id, m] : registry_->members()) {
      if (id == config_.id) continue;
      notices.emplace_back(m.record.control_endpoint,
                           bus::make_request(msg::kCellLeave, {{"node", config_.id.value}, {"reason", "stop"}}));
    }
  } else if (cell_) {
    notices.emplace_back(cell_->endpoint,
                         bus::make_request(msg::kCellLeave, {{"node", config_.id.value}, {"reason", "stop"}}));
  }
  // A join or switch whose answer has not arrived yet may already have been
  // accepted; its reply is ignored from here on, so undo it.
  if (config_.role == NodeRole::kPrimary && pending_endpoint_ && (!cell_ || cell_->endpoint != *pending_endpoint_)) {
    notices.emplace_back(*pending_endpoint_,
                         bus::make_request(msg::kCellLeave, {{"node", config_.id.value}, {"reason", "abort"}}));
  }
  const auto previous = state_;
  state_ = NodeState::kStopped;
  cell_.reset();
  pending_endpoint_.reset();
  switching_ = false;
  in_flight_.clear();
  pending_leaves_.clear();
  ++epoch_;
  emit("node.stop", {{"previous", std::string(to_string(previous))}, {"notified", notices.size()}});
  detail::gather(env_, std::move(notices), config_.timing.request_timeout_ms,
                 guard_life([this, epoch = epoch_, done = std::move(done)](std::vector<RpcResult>) {
                   if (epoch == epoch_) registry_.reset();
                   if (done) done();
                 }));
}

void Node::leave() {
  if (config_.role != NodeRole::kPrimary || !cell_) return;
  const auto old = *cell_;
  go_independent("left");
  send_departure(old.endpoint, "stop", {});
}

void Node::rejoin() {
  if (config_.role != NodeRole::kPrimary || state_ != NodeState::kIndependent) return;
  begin_join();
}

// ---------------------------------------------------------------- inbound

void Node::on_request(const bus::Message& message, bus::Reply reply) {
  if (state_ == NodeState::kStopped) {
    reply(bus::make_rejection(message.msg_id, ErrorCode::kConnectionRefused, config_.id.value + " is stopped"));
    return;
  }
  handlers_.dispatch(message, std::move(reply));
}

void Node::on_datagram(const Json& datagram) {
  if (state_ == NodeState::kStopped) return;
  try {
    auto a = presence_from_json(datagram);
    if (a.node == config_.id) return;
    presence_.observe(a, env_.now_ms());
  } catch (const Error&) {
    // Not an announcement we understand; multicast groups are shared.
  }
}

void Node::on_registration_switch(const Endpoint& target, SwitchReply reply) {
  auto respond = [&](int status, const std::string& what) {
    emit("switch.reply", {{"target", target.str()}, {"status", status}, {"detail", what}});
    reply(status, Json{{"node", config_.id.value}, {"detail", what}});
  };
  if (config_.role != NodeRole::kPrimary) return respond(409, "coordinators do not switch cells");
  if (state_ == NodeState::kStopped) return respond(409, "node is stopped");
  if (switching_ || state_ == NodeState::kDiscovering || state_ == NodeState::kJoining) {
    return respond(409, "membership change already under way");
  }
  if (cell_ && cell_->endpoint == target) return respond(200, "already a member");

  switching_ = true;
  emit("switch.begin", {{"target", target.str()}});
  join(target, [this, target, reply = std::move(reply)](std::optional<NodeId> coordinator, std::string reason) {
    switching_ = false;
    if (!coordinator) {
      pending_endpoint_.reset();
      emit("switch.reply", {{"target", target.str()}, {"status", 502}, {"detail", reason}});
      reply(502, Json{{"node", config_.id.value}, {"detail", reason}});
      return;
    }
    const auto old = cell_;
    become_member(*coordinator, target);
    if (old && old->endpoint != target) send_departure(old->endpoint, "transfer", {});
    emit("switch.reply", {{"target", target.str()}, {"status", 200}, {"detail", "joined"}});
    reply(200, Json{{"node", config_.id.value}, {"coordinator", coordinator->value}});
  });
}

// ---------------------------------------------------------------- joining

void Node::begin_join() {
  if (config_.coordinator_endpoint && !pending_leaves_.contains(*config_.coordinator_endpoint)) {
    state_ = NodeState::kJoining;
    const auto target = *config_.coordinator_endpoint;
    join(target, [this, target](std::optional<NodeId> coordinator, std::string reason) {
      if (coordinator) {
        become_member(*coordinator, target);
        return;
      }
      emit("join.fallback", {{"target", target.str()}, {"reason", reason}});
      discover({target});
    });
    return;
  }
  discover({});
}

void Node::discover(std::set<Endpoint> exclude) {
  state_ = NodeState::kDiscovering;
  if (discovery_timer_) env_.cancel(discovery_timer_);
  discovery_timer_ = env_.schedule(config_.timing.discovery_window_ms, guard([this, exclude] {
                                     discovery_timer_ = 0;
                                     rank_and_join(presence_.coordinators(env_.now_ms()), exclude, false);
                                   }));
}

void Node::rank_and_join(std::vector<PresenceAnnouncement> candidates, std::set<Endpoint> tried, bool requeried) {
  std::vector<std::pair<Endpoint, bus::Message>> queries;
  std::vector<PresenceAnnouncement> asked;
  for (const auto& c : candidates) {
    if (tried.contains(c.control_endpoint) || pending_leaves_.contains(c.control_endpoint)) continue;
    queries.emplace_back(c.control_endpoint, bus::make_request(msg::kCellQuery, {{"summary", true}}));
    asked.push_back(c);
  }
  if (asked.empty()) {
    go_independent(std::string(error_code_name(ErrorCode::kAllJoinAttemptsFailed)));
    return;
  }
  detail::gather(env_, std::move(queries), config_.timing.request_timeout_ms,
                 guard([this, asked, tried, requeried](std::vector<RpcResult> results) {
                   std::vector<Candidate> ranked;
                   for (std::size_t i = 0; i < results.size(); ++i) {
                     const auto& r = results[i];
                     if (!r.ok() || r.rejected() || r.response->msg_type != msg::kCellInfo) continue;
                     ranked.push_back(Candidate{r.response->payload.value("cell_size", 0),
                                                NodeId(r.response->payload.value("coordinator", asked[i].node.value)),
                                                asked[i].control_endpoint});
                   }
                   std::sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
                     return std::tie(a.size, a.id) < std::tie(b.size, b.id);
                   });
                   try_candidates(std::move(ranked), tried, requeried);
                 }));
}

void Node::try_candidates(std::vector<Candidate> ranked, std::set<Endpoint> tried, bool requeried) {
  if (ranked.empty()) {
    go_independent(std::string(error_code_name(ErrorCode::kAllJoinAttemptsFailed)));
    return;
  }
  state_ = NodeState::kJoining;
  const auto target = ranked.front().endpoint;
  join(target, [this, ranked, tried, requeried, target](std::optional<NodeId> coordinator,
                                                         std::string reason) mutable {
    if (coordinator) {
      become_member(*coordinator, target);
      return;
    }
    emit("join.failed", {{"target", target.str()}, {"reason", reason}});
    tried.insert(target);
    if (!requeried) {
      // Sizes may have moved while we were trying; ask once more.
      rank_and_join(presence_.coordinators(env_.now_ms()), tried, true);
      return;
    }
    ranked.erase(ranked.begin());
    try_candidates(std::move(ranked), tried, true);
  });
}

void Node::join(const Endpoint& target, JoinDone done) {
  pending_endpoint_ = target;
  emit("join.begin", {{"target", target.str()}});
  auto request = bus::make_request(msg::kCellJoin, {{"node", self_record()}});
  request.payload["node"].erase("cell");
  env_.request(target, std::move(request), config_.timing.request_timeout_ms,
               guard([this, target, done = std::move(done)](RpcResult r) {
                 if (r.ok() && !r.rejected()) {
                   done(NodeId(r.response->payload.value("coordinator", std::string())), "");
                   return;
                 }
                 if (r.rejected() && r.reason() == error_code_name(ErrorCode::kDuplicateMember)) {
                   // An earlier attempt got through after all.
                   done(NodeId(r.response->payload.value("coordinator", std::string())), "");
                   return;
                 }
                 if (r.error && r.error->code() == ErrorCode::kTimeout) {
                   // The join may have landed; make sure it does not stick.
                   send_departure(target, "abort", {});
                 }
                 done(std::nullopt, r.reason());
               }));
}

void Node::become_member(const NodeId& coordinator, const Endpoint& endpoint) {
  cell_ = CellRef{coordinator, endpoint};
  pending_endpoint_.reset();
  state_ = NodeState::kMember;
  last_error_.reset();
  sync_failures_ = 0;
  if (presence_timer_) env_.cancel(presence_timer_);
  presence_timer_ = 0;
  emit("cell.joined", {{"coordinator", coordinator.value}, {"endpoint", endpoint.str()}});
  send_sync();
  schedule_sync();
}

void Node::go_independent(const std::string& reason) {
  cell_.reset();
  pending_endpoint_.reset();
  state_ = NodeState::kIndependent;
  last_error_ = reason;
  if (sync_timer_) env_.cancel(sync_timer_);
  sync_timer_ = 0;
  emit("cell.independent", {{"reason", reason}});
  schedule_presence();
}

void Node::send_departure(const Endpoint& to, const char* reason, std::function<void()> first_outcome) {
  pending_leaves_.insert(to);
  auto request = bus::make_request(msg::kCellLeave, {{"node", config_.id.value}, {"reason", reason}});
  env_.request(to, request, config_.timing.request_timeout_ms,
               guard([this, to, reason, first_outcome = std::move(first_outcome)](RpcResult r) {
                 if (first_outcome) first_outcome();
                 const bool busy = r.rejected() && r.reason() == error_code_name(ErrorCode::kRegistryBusy);
                 // Nothing listening means there is no registry left to clean up.
                 const bool gone = r.error && r.error->code() == ErrorCode::kConnectionRefused;
                 if ((r.ok() && !busy) || gone) {
                   pending_leaves_.erase(to);
                   emit("leave.acked", {{"target", to.str()}, {"reason", reason}});
                   return;
                 }
                 env_.schedule(config_.timing.retry_interval_ms, guard([this, to, reason] {
                                 send_departure(to, reason, {});
                               }));
               }));
}

// ---------------------------------------------------------------- periodic

void Node::schedule_presence() {
  if (presence_timer_) env_.cancel(presence_timer_);
  announce_presence();
  presence_timer_ = env_.schedule(config_.timing.presence_interval_ms, guard([this] {
                                    presence_timer_ = 0;
                                    if (config_.role == NodeRole::kPrimary && state_ != NodeState::kIndependent) return;
                                    schedule_presence();
                                  }));
}

void Node::announce_presence() {
  PresenceAnnouncement a{config_.id, config_.role, config_.control_endpoint, config_.registry_switch_endpoint,
                         std::nullopt};
  if (registry_) a.cell_size = registry_->size();
  env_.multicast(to_json(a));
}

void Node::schedule_sync() {
  if (sync_timer_) env_.cancel(sync_timer_);
  sync_timer_ = env_.schedule(config_.timing.sync_interval_ms, guard([this] {
                                sync_timer_ = 0;
                                send_sync();
                                schedule_sync();
                              }));
}

Json Node::status_payload() {
  Json instances = Json::array();
  if (runtime_) {
    for (const auto& r : runtime_->list()) instances.push_back(r);
  }
  return Json{{"node", config_.id.value},
              {"seq", ++sync_seq_},
              {"usage", config_.background_usage},
              {"gpus", config_.gpu.gpus},
              {"instances", std::move(instances)}};
}

void Node::send_sync() {
  if (config_.role == NodeRole::kCoordinator) {
    if (!registry_) return;
    auto payload = status_payload();
    registry_->apply_status(config_.id, payload["usage"].get<ResourceVector>(),
                            payload["gpus"].get<std::vector<Gpu>>(),
                            payload["instances"].get<std::vector<InstanceRecord>>(), std::nullopt);
    return;
  }
  if (!cell_) return;
  const auto target = *cell_;
  env_.request(target.endpoint, bus::make_request(msg::kInstanceStatus, status_payload()),
               config_.timing.request_timeout_ms, guard([this, target](RpcResult r) {
                 if (!cell_ || cell_->endpoint != target.endpoint || switching_) return;
                 if (!r.ok()) {
                   ++sync_failures_;
                   return;
                 }
                 sync_failures_ = 0;
                 if (!r.rejected() || r.reason() != error_code_name(ErrorCode::kUnknownMember)) return;
                 // The coordinator has forgotten us; ask to be let back in.
                 emit("cell.forgotten", {{"coordinator", target.id.value}});
                 cell_.reset();
                 if (sync_timer_) env_.cancel(sync_timer_);
                 sync_timer_ = 0;
                 state_ = NodeState::kJoining;
                 join(target.endpoint, [this, target](std::optional<NodeId> coordinator, std::string) {
                   if (coordinator) {
                     become_member(*coordinator, target.endpoint);
                   } else {
                     discover({target.endpoint});
                   }
                 });
               }));
}

// ---------------------------------------------------------------- any role

void Node::handle_announce(const bus::Message& m, bus::Reply reply) {
  Json out = Json::object();
  if (auto c = cell()) out["cell"] = c->value;
  if (pending_endpoint_) out["pending"] = pending_endpoint_->str();
  (void)m;
  reply(bus::make_ack(m.msg_id, std::move(out)));
}

void Node::handle_coordinator_leaving(const bus::Message& m, bus::Reply reply) {
  const NodeId from(m.payload.at("node").get<std::string>());
  const bool ours = cell_ && cell_->id == from;
  if (ours) go_independent("coordinator stopped");
  reply(bus::make_ack(m.msg_id, {{"was_member", ours}}));
}

void Node::handle_deploy(const bus::Message& m, bus::Reply reply) {
  if (!runtime_) fail(ErrorCode::kLaunchFailed, config_.id.value + " has no execution backend");
  deploy::DeployRequest req;
  req.task = m.payload.at("task").get<TaskSpec>();
  req.instance_id = m.payload.at("instance_id").get<std::string>();
  const auto& model = m.payload.at("model");
  req.model.model_name = model.at("model_name").get<std::string>();
  req.model.engine_kind = engine_kind_from_string(model.at("engine_kind").get<std::string>());
  if (model.contains("entry_point")) req.model.entry_point = model["entry_point"].get<std::string>();
  if (model.contains("checkpoint_ref")) req.model.checkpoint_ref = model["checkpoint_ref"].get<std::string>();
  req.deployment = deployment_option_from_json(m.payload.at("deployment"));
  req.model.deployments = {req.deployment};
  if (m.payload.contains("gpu_id")) req.gpu_id = m.payload["gpu_id"].get<std::string>();

  struct Outcome {
    std::optional<InstanceRecord> record;
    std::optional<Error> error;
  };
  auto outcome = std::make_shared<Outcome>();
  const auto msg_id = m.msg_id;
  env_.run_blocking(
      [rt = runtime_, req, outcome] {
        try {
          outcome->record = rt->deploy(req);
        } catch (const Error& e) {
          outcome->error = e;
        } catch (const std::exception& e) {
          outcome->error = Error(ErrorCode::kLaunchFailed, e.what());
        }
      },
      guard_life([this, outcome, msg_id, reply = std::move(reply)] {
        if (outcome->error) {
          reply(bus::make_rejection(msg_id, *outcome->error));
        } else {
          reply(bus::make_ack(msg_id, {{"instance", *outcome->record}}));
        }
        emit("instance.deployed", {{"ok", !outcome->error}});
        if (state_ != NodeState::kStopped) send_sync();
      }));
}

void Node::handle_stop(const bus::Message& m, bus::Reply reply) {
  if (!runtime_) fail(ErrorCode::kLaunchFailed, config_.id.value + " has no execution backend");
  const auto task_id = m.payload.at("task_id").get<std::string>();
  auto stopped = std::make_shared<std::vector<InstanceRecord>>();
  const auto msg_id = m.msg_id;
  env_.run_blocking(
      [rt = runtime_, task_id, stopped] {
        try {
          *stopped = rt->stop_task(task_id);
        } catch (const std::exception&) {
          // Whatever did stop is still listed by the runtime.
        }
      },
                    guard_life([this, stopped, msg_id, reply = std::move(reply)] {
                      Json ids = Json::array();
                      for (const auto& r : *stopped) ids.push_back(r.instance_id);
                      reply(bus::make_ack(msg_id, {{"stopped", std::move(ids)}}));
                      if (state_ != NodeState::kStopped) send_sync();
                    }));
}

}  // namespace cellkit::node
