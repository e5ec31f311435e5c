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

#include "cellkit/core/types.hpp"

#include <charconv>
#include <cstdio>
#include <set>

#include "cellkit/core/error.hpp"

namespace cellkit {

NodeId node_id_from_mac(const std::array<std::uint8_t, 6>& mac) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "node-%02x%02x%02x%02x%02x%02x", mac[0], mac[1], mac[2], mac[3],
                mac[4], mac[5]);
  return NodeId(buf);
}

std::string_view to_string(NodeRole role) {
  return role == NodeRole::kCoordinator ? "coordinator" : "primary";
}

NodeRole node_role_from_string(std::string_view s) {
  if (s == "coordinator") return NodeRole::kCoordinator;
  if (s == "primary") return NodeRole::kPrimary;
  fail(ErrorCode::kInvalidArgument, "unknown node role '" + std::string(s) + "'");
}

Endpoint Endpoint::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    fail(ErrorCode::kInvalidArgument, "endpoint must be host:port, got '" + std::string(text) + "'");
  }
  Endpoint ep;
  ep.host = std::string(text.substr(0, colon));
  const auto port_text = text.substr(colon + 1);
  unsigned value = 0;
  const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || value > 65535) {
    fail(ErrorCode::kInvalidArgument, "bad port in endpoint '" + std::string(text) + "'");
  }
  ep.port = static_cast<std::uint16_t>(value);
  return ep;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

void validate_pipeline(const TaskPipeline& pipeline) {
  std::set<std::string> ids;
  for (const auto& t : pipeline.tasks) {
    if (t.task_id.empty()) fail(ErrorCode::kInvalidArgument, "task with empty task_id");
    if (!ids.insert(t.task_id).second) {
      fail(ErrorCode::kInvalidArgument, "duplicate task_id '" + t.task_id + "'");
    }
  }
}

std::string_view to_string(InstanceStatus status) {
  switch (status) {
    case InstanceStatus::kBuilding: return "building";
    case InstanceStatus::kRunning: return "running";
    case InstanceStatus::kStopped: return "stopped";
    case InstanceStatus::kFailed: return "failed";
  }
  return "failed";
}

InstanceStatus instance_status_from_string(std::string_view s) {
  if (s == "building") return InstanceStatus::kBuilding;
  if (s == "running") return InstanceStatus::kRunning;
  if (s == "stopped") return InstanceStatus::kStopped;
  if (s == "failed") return InstanceStatus::kFailed;
  fail(ErrorCode::kInvalidArgument, "unknown instance status '" + std::string(s) + "'");
}

void to_json(Json& j, const NodeId& v) { j = v.value; }
void from_json(const Json& j, NodeId& v) { v.value = j.get<std::string>(); }

void to_json(Json& j, const Endpoint& v) { j = v.str(); }
void from_json(const Json& j, Endpoint& v) { v = Endpoint::parse(j.get<std::string>()); }

void to_json(Json& j, const NodeRecord& v) {
  j = Json{{"id", v.id},
           {"role", to_string(v.role)},
           {"arch", v.arch},
           {"control_endpoint", v.control_endpoint},
           {"registry_switch_endpoint", v.registry_switch_endpoint},
           {"capacity", v.capacity},
           {"usage", v.usage},
           {"gpu", v.gpu}};
  if (v.cell) j["cell"] = *v.cell;
}

void from_json(const Json& j, NodeRecord& v) {
  v.id = j.at("id").get<NodeId>();
  v.role = node_role_from_string(j.at("role").get<std::string>());
  v.arch = j.at("arch").get<std::string>();
  v.control_endpoint = j.at("control_endpoint").get<Endpoint>();
  v.registry_switch_endpoint = j.at("registry_switch_endpoint").get<Endpoint>();
  v.capacity = j.at("capacity").get<ResourceVector>();
  v.usage = j.value("usage", ResourceVector{});
  v.gpu = j.value("gpu", GpuInventory{});
  if (auto it = j.find("cell"); it != j.end() && !it->is_null()) {
    v.cell = it->get<NodeId>();
  } else {
    v.cell.reset();
  }
}

void to_json(Json& j, const IoEndpoint& v) {
  j = Json{{"protocol_id", v.protocol_id}, {"address", v.address}};
}

void from_json(const Json& j, IoEndpoint& v) {
  v.protocol_id = j.at("protocol_id").get<std::string>();
  v.address = j.at("address").get<std::string>();
}

void to_json(Json& j, const TaskSpec& v) {
  j = Json{{"task_id", v.task_id},
           {"operation_name", v.operation_name},
           {"model_name", v.model_name},
           {"input_endpoint", v.input},
           {"output_endpoint", v.output}};
  if (v.deployment_preference) j["deployment_preference"] = *v.deployment_preference;
}

void from_json(const Json& j, TaskSpec& v) {
  v.task_id = j.at("task_id").get<std::string>();
  v.operation_name = j.at("operation_name").get<std::string>();
  v.model_name = j.at("model_name").get<std::string>();
  v.input = j.at("input_endpoint").get<IoEndpoint>();
  v.output = j.at("output_endpoint").get<IoEndpoint>();
  if (auto it = j.find("deployment_preference"); it != j.end() && !it->is_null()) {
    v.deployment_preference = it->get<std::string>();
  } else {
    v.deployment_preference.reset();
  }
}

void to_json(Json& j, const TaskPipeline& v) { j = Json{{"tasks", v.tasks}}; }
void from_json(const Json& j, TaskPipeline& v) { v.tasks = j.at("tasks").get<std::vector<TaskSpec>>(); }

void to_json(Json& j, const Assignment& v) {
  j = Json{{"task_id", v.task_id}, {"node", v.node}, {"deployment_id", v.deployment_id}};
  if (v.gpu_id) j["gpu_id"] = *v.gpu_id;
}

void from_json(const Json& j, Assignment& v) {
  v.task_id = j.at("task_id").get<std::string>();
  v.node = j.at("node").get<NodeId>();
  v.deployment_id = j.at("deployment_id").get<std::string>();
  if (auto it = j.find("gpu_id"); it != j.end() && !it->is_null()) {
    v.gpu_id = it->get<std::string>();
  } else {
    v.gpu_id.reset();
  }
}

void to_json(Json& j, const AllocationScheme& v) { j = Json{{"assignments", v.assignments}}; }
void from_json(const Json& j, AllocationScheme& v) {
  v.assignments = j.at("assignments").get<std::vector<Assignment>>();
}

void to_json(Json& j, const InstanceRecord& v) {
  j = Json{{"task_id", v.task_id},
           {"instance_id", v.instance_id},
           {"image_id", v.image_id},
           {"node", v.node},
           {"params", v.params},
           {"status", to_string(v.status)},
           {"deployment_id", v.deployment_id},
           {"request", v.request}};
  if (v.gpu_id) j["gpu_id"] = *v.gpu_id;
}

void from_json(const Json& j, InstanceRecord& v) {
  v.task_id = j.at("task_id").get<std::string>();
  v.instance_id = j.at("instance_id").get<std::string>();
  v.image_id = j.value("image_id", std::string{});
  v.node = j.at("node").get<NodeId>();
  v.params = j.value("params", std::map<std::string, std::string>{});
  v.status = instance_status_from_string(j.at("status").get<std::string>());
  v.deployment_id = j.value("deployment_id", std::string{});
  v.request = j.value("request", ResourceVector{});
  if (auto it = j.find("gpu_id"); it != j.end() && !it->is_null()) {
    v.gpu_id = it->get<std::string>();
  } else {
    v.gpu_id.reset();
  }
}

}  // namespace cellkit
