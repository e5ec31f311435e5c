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

#include <algorithm>
#include <map>

#include "cellkit/node/node.hpp"
#include "internal.hpp"

namespace cellkit::node {
namespace {

std::vector<InstanceRecord> parse_instances(const Json& j) {
  if (!j.is_array()) return {};
  return j.get<std::vector<InstanceRecord>>();
}

Json model_payload(const ImplementationModel& model) {
  Json j{{"model_name", model.model_name},
         {"engine_kind", std::string(to_string(model.engine_kind))},
         {"entry_point", model.effective_entry_point()}};
  if (model.checkpoint_ref) j["checkpoint_ref"] = *model.checkpoint_ref;
  return j;
}

}  // namespace

// ---------------------------------------------------------------- liveness

void Node::schedule_pings() {
  if (ping_timer_) env_.cancel(ping_timer_);
  ping_timer_ = env_.schedule(config_.timing.ping_interval_ms, guard([this] {
                                ping_timer_ = 0;
                                ping_members();
                                schedule_pings();
                              }));
}

void Node::ping_members() {
  if (!registry_) return;
  for (const auto& [id, m] : registry_->members()) {
    if (id == config_.id) continue;
    auto ping = bus::make_request(msg::kNodeAnnounce, {{"coordinator", config_.id.value}});
    env_.request(m.record.control_endpoint, std::move(ping), config_.timing.request_timeout_ms,
                 guard([this, id](RpcResult r) {
                   Member* member = registry_ ? registry_->find(id) : nullptr;
                   if (!member) return;
                   if (!r.ok() || r.rejected()) {
                     if (++member->missed_pings >= config_.timing.ping_miss_limit && member->active) {
                       member->active = false;
                       emit("member.inactive", {{"member", id.value}, {"missed", member->missed_pings}});
                     }
                     return;
                   }
                   member->missed_pings = 0;
                   if (!member->active) {
                     member->active = true;
                     emit("member.active", {{"member", id.value}});
                   }
                   const auto& p = r.response->payload;
                   const auto their_cell = p.value("cell", std::string());
                   const auto pending = p.value("pending", std::string());
                   if (their_cell == config_.id.value || pending == config_.control_endpoint.str()) return;
                   if (in_flight_.contains(id)) return;
                   // The node no longer considers itself ours.
                   registry_->remove(id);
                   emit("member.dropped", {{"member", id.value}, {"their_cell", their_cell}});
                 }));
  }
}

// ---------------------------------------------------------------- membership

void Node::handle_join(const bus::Message& m, bus::Reply reply) {
  auto record = m.payload.at("node").get<NodeRecord>();
  if (record.role != NodeRole::kPrimary) {
    fail(ErrorCode::kInvalidArgument, "only primaries join cells; " + record.id.value + " is a coordinator");
  }
  if (auto it = in_flight_.find(record.id); it != in_flight_.end() && it->second != config_.id) {
    fail(ErrorCode::kRegistryBusy, "a registration switch for " + record.id.value + " is under way");
  }
  if (registry_->contains(record.id)) {
    fail(ErrorCode::kDuplicateMember, record.id.value + " is already a member",
         {{"coordinator", config_.id.value}});
  }
  const auto id = record.id;
  registry_->add(std::move(record));
  emit("member.joined", {{"member", id.value}, {"cell_size", registry_->size()}});
  reply(bus::make_ack(m.msg_id, {{"coordinator", config_.id.value}, {"cell_size", registry_->size()}}));
}

void Node::handle_leave(const bus::Message& m, bus::Reply reply) {
  const NodeId id(m.payload.at("node").get<std::string>());
  const auto reason = m.payload.value("reason", std::string("stop"));
  if (id == config_.id) fail(ErrorCode::kInvalidArgument, "the coordinator cannot leave its own cell");
  if (in_flight_.contains(id) && reason != "transfer") {
    fail(ErrorCode::kRegistryBusy, "a registration switch for " + id.value + " is under way");
  }
  const bool was = registry_->remove(id);
  if (was) emit("member.left", {{"member", id.value}, {"reason", reason}});
  reply(bus::make_ack(m.msg_id, {{"was_member", was}}));
}

void Node::handle_query(const bus::Message& m, bus::Reply reply) {
  reply(bus::Message{msg::kCellInfo, m.msg_id, registry_->cell_info(m.payload.value("summary", false))});
}

void Node::handle_status(const bus::Message& m, bus::Reply reply) {
  const NodeId id(m.payload.at("node").get<std::string>());
  std::optional<ResourceVector> usage;
  std::optional<std::vector<Gpu>> gpus;
  std::optional<std::vector<InstanceRecord>> instances;
  std::optional<std::uint64_t> seq;
  if (m.payload.contains("usage")) usage = m.payload["usage"].get<ResourceVector>();
  if (m.payload.contains("gpus")) gpus = m.payload["gpus"].get<std::vector<Gpu>>();
  if (m.payload.contains("instances")) instances = parse_instances(m.payload["instances"]);
  if (m.payload.contains("seq")) seq = m.payload["seq"].get<std::uint64_t>();
  const bool applied = registry_->apply_status(id, usage, gpus, instances, seq);
  if (Member* member = registry_->find(id)) {
    member->missed_pings = 0;
    member->active = true;
  }
  reply(bus::make_ack(m.msg_id, {{"applied", applied}}));
}

// ---------------------------------------------------------------- transfer

void Node::handle_transfer(const bus::Message& m, bus::Reply reply) {
  const NodeId primary(m.payload.at("primary").get<std::string>());
  const NodeId dest(m.payload.at("dest_coordinator").get<std::string>());
  const bool forwarded = m.payload.value("forwarded", false);
  const auto now = env_.now_ms();

  auto destination = [&]() -> PresenceAnnouncement {
    if (dest == config_.id) {
      return PresenceAnnouncement{config_.id, NodeRole::kCoordinator, config_.control_endpoint,
                                  config_.registry_switch_endpoint, registry_->size()};
    }
    auto d = presence_.find(dest, now);
    if (!d || d->role != NodeRole::kCoordinator) {
      fail(ErrorCode::kUnknownDestination, "no coordinator " + dest.value + " has been heard from");
    }
    return *d;
  };

  if (primary == config_.id) fail(ErrorCode::kInvalidArgument, "a coordinator cannot be transferred");

  if (const Member* member = registry_->find(primary)) {
    if (in_flight_.contains(primary)) {
      fail(ErrorCode::kRegistryBusy, "a registration switch for " + primary.value + " is under way");
    }
    if (dest == config_.id) {
      reply(bus::make_ack(m.msg_id, {{"primary", primary.value}, {"coordinator", dest.value}, {"moved", false}}));
      return;
    }
    switch_member(primary, member->record.registry_switch_endpoint, destination(), true, m.msg_id,
                  std::move(reply));
    return;
  }
  if (forwarded) fail(ErrorCode::kUnknownPrimary, primary.value + " is not a member of " + config_.id.value);

  // Validate the destination now so a bad request fails fast.
  auto dest_presence = destination();
  find_owner(primary, guard([this, m, primary, dest_presence, reply = std::move(reply)](
                                std::optional<PresenceAnnouncement> owner) mutable {
    if (owner) {
      auto forward = bus::make_request(msg::kCellTransfer, m.payload);
      forward.payload["forwarded"] = true;
      const auto timeout = config_.timing.switch_timeout_ms + 2 * config_.timing.request_timeout_ms;
      env_.request(owner->control_endpoint, std::move(forward), timeout,
                   guard([msg_id = m.msg_id, reply = std::move(reply)](RpcResult r) {
                     if (r.ok()) {
                       auto out = *r.response;
                       out.msg_id = msg_id;
                       reply(std::move(out));
                     } else {
                       reply(bus::make_rejection(msg_id, *r.error));
                     }
                   }));
      return;
    }
    auto independent = presence_.find(primary, env_.now_ms());
    if (independent && independent->role == NodeRole::kPrimary && !registry_->contains(primary)) {
      switch_member(primary, independent->registry_switch_endpoint, dest_presence, false, m.msg_id,
                    std::move(reply));
      return;
    }
    reply(bus::make_rejection(m.msg_id, ErrorCode::kUnknownPrimary,
                              "no coordinator lists " + primary.value + " and it is not announcing"));
  }));
}

void Node::find_owner(const NodeId& primary, std::function<void(std::optional<PresenceAnnouncement>)> done) {
  std::vector<std::pair<Endpoint, bus::Message>> queries;
  std::vector<PresenceAnnouncement> asked;
  for (const auto& c : presence_.coordinators(env_.now_ms())) {
    if (c.node == config_.id) continue;
    queries.emplace_back(c.control_endpoint, bus::make_request(msg::kCellQuery, {{"summary", false}}));
    asked.push_back(c);
  }
  detail::gather(env_, std::move(queries), config_.timing.request_timeout_ms,
                 [asked, primary, done = std::move(done)](std::vector<RpcResult> results) {
                   for (std::size_t i = 0; i < results.size(); ++i) {
                     const auto& r = results[i];
                     if (!r.ok() || r.rejected()) continue;
                     for (const auto& member : detail::nested(r.response->payload, "members")) {
                       if (member["record"].value("id", std::string()) == primary.value) {
                         done(asked[i]);
                         return;
                       }
                     }
                   }
                   done(std::nullopt);
                 });
}

void Node::switch_member(const NodeId& primary, const Endpoint& switch_endpoint, const PresenceAnnouncement& dest,
                         bool member, const std::string& msg_id, bus::Reply reply) {
  in_flight_.emplace(primary, dest.node);
  emit("transfer.begin", {{"primary", primary.value}, {"dest", dest.node.value}, {"member", member}});
  env_.switch_registration(
      switch_endpoint, dest.control_endpoint, config_.timing.switch_timeout_ms,
      guard([this, primary, dest, member, msg_id, reply = std::move(reply)](int status) {
        in_flight_.erase(primary);
        emit("transfer.result", {{"primary", primary.value}, {"dest", dest.node.value}, {"status", status}});
        const Json where{{"primary", primary.value}, {"dest_coordinator", dest.node.value}, {"status", status}};
        switch (status) {
          case 200:
            if (member && dest.node != config_.id) registry_->remove(primary);
            reply(bus::make_ack(msg_id, {{"primary", primary.value}, {"coordinator", dest.node.value}, {"moved", true}}));
            return;
          case 409:
            reply(bus::make_rejection(msg_id, ErrorCode::kRegistryBusy,
                                      primary.value + " is already changing membership", where));
            return;
          case 502:
            reply(bus::make_rejection(msg_id, ErrorCode::kSwitchFailed,
                                      primary.value + " could not register with " + dest.node.value, where));
            return;
          default:
            reply(bus::make_rejection(msg_id, ErrorCode::kSwitchUnconfirmed,
                                      "no answer from " + primary.value + "; membership is unconfirmed", where));
        }
      }));
}

// ---------------------------------------------------------------- tasks

void Node::plan_tasks(const bus::Message& m, bus::Reply reply) {
  auto pipeline = m.payload.at("pipeline").get<TaskPipeline>();
  validate_pipeline(pipeline);
  for (const auto& t : pipeline.tasks) {
    if (!registry_->instances_of_task(t.task_id).empty()) {
      fail(ErrorCode::kDuplicateName, "task " + t.task_id + " is already deployed", {{"task_id", t.task_id}});
    }
  }
  auto scored = sched::select_allocation(pipeline, registry_->schedulable_nodes(), config_.library, config_.scheduler);
  emit("task.planned", {{"tasks", pipeline.tasks.size()}, {"score", scored.total}});
  reply(bus::Message{msg::kTaskPlan, m.msg_id,
                     {{"pipeline", pipeline}, {"scheme", scored.scheme}, {"score", scored.total}}});
}

void Node::dispatch_plan(const bus::Message& m, bus::Reply reply) {
  const auto pipeline = m.payload.at("pipeline").get<TaskPipeline>();
  const auto scheme = m.payload.at("scheme").get<AllocationScheme>();
  const double score = m.payload.at("score").get<double>();

  std::vector<InstanceRecord> booked;
  std::vector<std::pair<Endpoint, bus::Message>> deploys;
  auto unbook = [&] {
    for (const auto& r : booked) registry_->release(r.instance_id);
  };
  try {
    for (const auto& a : scheme.assignments) {
      auto task = std::find_if(pipeline.tasks.begin(), pipeline.tasks.end(),
                               [&](const TaskSpec& t) { return t.task_id == a.task_id; });
      if (task == pipeline.tasks.end()) fail(ErrorCode::kInvalidArgument, "scheme names unknown task " + a.task_id);
      const auto& model = resolve_model(config_.library, *task);
      const auto* deployment = model.find_deployment(a.deployment_id);
      if (!deployment) fail(ErrorCode::kUnknownPreference, "no deployment " + a.deployment_id);
      const Member* member = registry_->find(a.node);
      if (!member) fail(ErrorCode::kUnknownMember, a.node.value + " left the cell before dispatch");

      InstanceRecord r;
      r.task_id = a.task_id;
      r.instance_id = a.task_id + "-" + env_.random_id().substr(0, 12);
      r.node = a.node;
      r.status = InstanceStatus::kBuilding;
      r.deployment_id = a.deployment_id;
      r.request = deployment->request;
      r.gpu_id = a.gpu_id;
      registry_->reserve(r);
      booked.push_back(r);

      Json payload{{"task", *task},
                   {"instance_id", r.instance_id},
                   {"model", model_payload(model)},
                   {"deployment", to_json(*deployment)}};
      if (a.gpu_id) payload["gpu_id"] = *a.gpu_id;
      deploys.emplace_back(member->record.control_endpoint, bus::make_request(msg::kInstanceDeploy, payload));
    }
  } catch (...) {
    unbook();
    throw;
  }

  emit("task.dispatch", {{"instances", booked.size()}});
  detail::gather(
      env_, std::move(deploys), config_.timing.deploy_timeout_ms,
      guard([this, booked, scheme, score, msg_id = m.msg_id, reply = std::move(reply)](std::vector<RpcResult> results) {
        Json failures = Json::array();
        std::optional<ErrorCode> first;
        std::set<std::pair<NodeId, std::string>> succeeded;
        Json instances = Json::array();
        for (std::size_t i = 0; i < results.size(); ++i) {
          const auto& r = results[i];
          const auto& b = booked[i];
          if (r.ok() && !r.rejected()) {
            auto reported = r.response->payload.at("instance").get<InstanceRecord>();
            registry_->refresh(reported);
            instances.push_back(reported);
            succeeded.emplace(b.node, b.task_id);
            continue;
          }
          const auto code = r.error ? r.error->code() : error_code_from_name(r.reason());
          if (!first) first = code;
          failures.push_back({{"task_id", b.task_id},
                              {"node", b.node.value},
                              {"reason_code", r.reason()},
                              {"detail", r.error ? r.error->detail() : r.response->payload.value("detail", "")}});
        }
        if (!first) {
          emit("task.deployed", {{"instances", booked.size()}});
          reply(bus::make_ack(msg_id, {{"scheme", scheme}, {"score", score}, {"instances", std::move(instances)}}));
          return;
        }
        // Roll the whole pipeline back.
        for (const auto& [node, task_id] : succeeded) {
          if (const Member* member = registry_->find(node)) {
            env_.request(member->record.control_endpoint,
                         bus::make_request(msg::kInstanceStop, {{"task_id", task_id}}),
                         config_.timing.deploy_timeout_ms, [](RpcResult) {});
          }
        }
        for (const auto& b : booked) registry_->release(b.instance_id);
        emit("task.rolled_back", {{"failures", failures}});
        reply(bus::make_rejection(msg_id, *first, "deployment failed; pipeline rolled back",
                                  {{"failures", std::move(failures)}}));
      }));
}

void Node::handle_terminate(const bus::Message& m, bus::Reply reply) {
  const auto task_id = m.payload.at("task_id").get<std::string>();
  const auto records = registry_->instances_of_task(task_id);
  if (records.empty()) fail(ErrorCode::kUnknownTask, "no instances of task " + task_id, {{"task_id", task_id}});

  std::map<NodeId, std::vector<std::string>> by_node;
  for (const auto& r : records) by_node[r.node].push_back(r.instance_id);
  std::vector<NodeId> nodes;
  std::vector<std::pair<Endpoint, bus::Message>> stops;
  for (const auto& [node, _] : by_node) {
    const Member* member = registry_->find(node);
    nodes.push_back(node);
    stops.emplace_back(member->record.control_endpoint, bus::make_request(msg::kInstanceStop, {{"task_id", task_id}}));
  }
  detail::gather(env_, std::move(stops), config_.timing.deploy_timeout_ms,
                 guard([this, task_id, by_node, nodes, msg_id = m.msg_id, reply = std::move(reply)](
                           std::vector<RpcResult> results) {
                   Json stopped = Json::array();
                   Json unreachable = Json::array();
                   for (std::size_t i = 0; i < results.size(); ++i) {
                     if (results[i].ok() && !results[i].rejected()) {
                       for (const auto& id : by_node.at(nodes[i])) {
                         registry_->release(id);
                         stopped.push_back(id);
                       }
                     } else {
                       unreachable.push_back(nodes[i].value);
                     }
                   }
                   emit("task.terminated", {{"task_id", task_id}, {"unreachable", unreachable}});
                   if (!unreachable.empty()) {
                     reply(bus::make_rejection(msg_id, ErrorCode::kPartialTermination,
                                               "some nodes did not confirm the stop",
                                               {{"task_id", task_id}, {"unreachable", unreachable}, {"stopped", stopped}}));
                     return;
                   }
                   reply(bus::make_ack(msg_id, {{"task_id", task_id}, {"stopped", stopped}}));
                 }));
}

}  // namespace cellkit::node
