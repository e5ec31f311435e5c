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

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellkit/core/resources.hpp"

namespace cellkit {

using Json = nlohmann::json;

struct NodeId {
  std::string value;

  NodeId() = default;
  explicit NodeId(std::string v) : value(std::move(v)) {}

  bool empty() const noexcept { return value.empty(); }
  const std::string& str() const noexcept { return value; }

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

// Deterministic node id from a 6-byte hardware address.
NodeId node_id_from_mac(const std::array<std::uint8_t, 6>& mac);

enum class NodeRole { kPrimary, kCoordinator };

std::string_view to_string(NodeRole role);
NodeRole node_role_from_string(std::string_view s);

// host:port pair; the wire form is "host:port".
struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  static Endpoint parse(std::string_view text);
  std::string str() const;
  bool empty() const noexcept { return host.empty(); }

  friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

struct NodeRecord {
  NodeId id;
  NodeRole role = NodeRole::kPrimary;
  std::string arch;
  Endpoint control_endpoint;
  Endpoint registry_switch_endpoint;
  ResourceVector capacity;
  ResourceVector usage;
  GpuInventory gpu;
  std::optional<NodeId> cell;

  bool operator==(const NodeRecord&) const = default;
};

struct IoEndpoint {
  std::string protocol_id;
  std::string address;

  bool operator==(const IoEndpoint&) const = default;
};

struct TaskSpec {
  std::string task_id;
  std::string operation_name;
  std::string model_name;
  IoEndpoint input;
  IoEndpoint output;
  std::optional<std::string> deployment_preference;

  bool operator==(const TaskSpec&) const = default;
};

// Ordered; order defines precedence for resource-fraction reservations.
struct TaskPipeline {
  std::vector<TaskSpec> tasks;

  bool operator==(const TaskPipeline&) const = default;
};

// Throws kInvalidArgument on duplicate or empty task ids.
void validate_pipeline(const TaskPipeline& pipeline);

struct Assignment {
  std::string task_id;
  NodeId node;
  std::string deployment_id;
  std::optional<std::string> gpu_id;

  bool operator==(const Assignment&) const = default;
};

struct AllocationScheme {
  std::vector<Assignment> assignments;

  bool operator==(const AllocationScheme&) const = default;
};

enum class InstanceStatus { kBuilding, kRunning, kStopped, kFailed };

std::string_view to_string(InstanceStatus status);
InstanceStatus instance_status_from_string(std::string_view s);

inline bool is_active(InstanceStatus s) {
  return s == InstanceStatus::kBuilding || s == InstanceStatus::kRunning;
}

struct InstanceRecord {
  std::string task_id;
  std::string instance_id;
  std::string image_id;
  NodeId node;
  std::map<std::string, std::string> params;
  InstanceStatus status = InstanceStatus::kBuilding;
  // Bookkeeping carried alongside the record so any coordinator holding it
  // can account for the reservation.
  std::string deployment_id;
  ResourceVector request;
  std::optional<std::string> gpu_id;

  bool operator==(const InstanceRecord&) const = default;
};

// JSON codecs (wire and file forms).
void to_json(Json& j, const NodeId& v);
void from_json(const Json& j, NodeId& v);
void to_json(Json& j, const Endpoint& v);
void from_json(const Json& j, Endpoint& v);
void to_json(Json& j, const NodeRecord& v);
void from_json(const Json& j, NodeRecord& v);
void to_json(Json& j, const IoEndpoint& v);
void from_json(const Json& j, IoEndpoint& v);
void to_json(Json& j, const TaskSpec& v);
void from_json(const Json& j, TaskSpec& v);
void to_json(Json& j, const TaskPipeline& v);
void from_json(const Json& j, TaskPipeline& v);
void to_json(Json& j, const Assignment& v);
void from_json(const Json& j, Assignment& v);
void to_json(Json& j, const AllocationScheme& v);
void from_json(const Json& j, AllocationScheme& v);
void to_json(Json& j, const InstanceRecord& v);
void from_json(const Json& j, InstanceRecord& v);

}  // namespace cellkit
