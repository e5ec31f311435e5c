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

#include "cellkit/node/presence.hpp"

#include "cellkit/core/error.hpp"
#include "cellkit/core/schemas.hpp"

namespace cellkit::node {

nlohmann::json to_json(const PresenceAnnouncement& a) {
  nlohmann::json j{{"node", a.node.value},
                   {"role", std::string(to_string(a.role))},
                   {"control_endpoint", a.control_endpoint.str()},
                   {"registry_switch_endpoint", a.registry_switch_endpoint.str()}};
  if (a.cell_size) j["cell_size"] = *a.cell_size;
  return j;
}

PresenceAnnouncement presence_from_json(const nlohmann::json& j) {
  vocabulary_schema().validate_at("/presence", j);
  PresenceAnnouncement a;
  a.node = NodeId(j.at("node").get<std::string>());
  a.role = node_role_from_string(j.at("role").get<std::string>());
  a.control_endpoint = Endpoint::parse(j.at("control_endpoint").get<std::string>());
  a.registry_switch_endpoint = Endpoint::parse(j.at("registry_switch_endpoint").get<std::string>());
  if (j.contains("cell_size")) a.cell_size = j.at("cell_size").get<int>();
  if (a.cell_size.has_value() != (a.role == NodeRole::kCoordinator)) {
    fail(ErrorCode::kSchemaViolation, "/cell_size: present iff the sender is a coordinator");
  }
  return a;
}

void PresenceCache::observe(const PresenceAnnouncement& a, std::int64_t now_ms) {
  entries_[a.node] = Entry{a, now_ms};
}

std::vector<PresenceAnnouncement> PresenceCache::coordinators(std::int64_t now_ms) const {
  std::vector<PresenceAnnouncement> out;
  for (const auto& [_, e] : entries_) {
    if (e.announcement.role == NodeRole::kCoordinator && fresh(e, now_ms)) out.push_back(e.announcement);
  }
  return out;
}

std::optional<PresenceAnnouncement> PresenceCache::find(const NodeId& id, std::int64_t now_ms) const {
  auto it = entries_.find(id);
  if (it == entries_.end() || !fresh(it->second, now_ms)) return std::nullopt;
  return it->second.announcement;
}

std::optional<PresenceAnnouncement> PresenceCache::find_by_endpoint(const Endpoint& control,
                                                                    std::int64_t now_ms) const {
  for (const auto& [_, e] : entries_) {
    if (e.announcement.control_endpoint == control && fresh(e, now_ms)) return e.announcement;
  }
  return std::nullopt;
}

}  // namespace cellkit::node
