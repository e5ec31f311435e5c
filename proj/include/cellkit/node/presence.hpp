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
#include <map>
#include <optional>
#include <vector>

#include "cellkit/core/types.hpp"

namespace cellkit::node {

struct PresenceAnnouncement {
  NodeId node;
  NodeRole role = NodeRole::kPrimary;
  Endpoint control_endpoint;
  Endpoint registry_switch_endpoint;
  // Coordinators only.
  std::optional<int> cell_size;

  bool operator==(const PresenceAnnouncement&) const = default;
};

nlohmann::json to_json(const PresenceAnnouncement& a);
// Validates against the presence schema; throws kSchemaViolation.
PresenceAnnouncement presence_from_json(const nlohmann::json& j);

inline constexpr std::size_t kMaxPresenceBytes = 512;

// Announcements heard recently, keyed by node.
class PresenceCache {
 public:
  explicit PresenceCache(std::int64_t expiry_ms) : expiry_ms_(expiry_ms) {}

  void observe(const PresenceAnnouncement& a, std::int64_t now_ms);
  void forget(const NodeId& id) { entries_.erase(id); }

  std::vector<PresenceAnnouncement> coordinators(std::int64_t now_ms) const;
  std::optional<PresenceAnnouncement> find(const NodeId& id, std::int64_t now_ms) const;
  std::optional<PresenceAnnouncement> find_by_endpoint(const Endpoint& control, std::int64_t now_ms) const;

 private:
  struct Entry {
    PresenceAnnouncement announcement;
    std::int64_t heard_at_ms;
  };
  bool fresh(const Entry& e, std::int64_t now_ms) const { return now_ms - e.heard_at_ms < expiry_ms_; }

  std::int64_t expiry_ms_;
  std::map<NodeId, Entry> entries_;
};

}  // namespace cellkit::node
