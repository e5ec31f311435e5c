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
#include <string>
#include <vector>

#include "cellkit/core/types.hpp"

namespace cellkit::node {

using Json = nlohmann::json;

struct Member {
  // usage and per-GPU mem_used hold what the node last reported about its
  // own background load; cell-managed reservations are tracked separately.
  NodeRecord record;
  bool active = true;
  int missed_pings = 0;
  std::optional<std::uint64_t> last_seq;
};

// Per-node reservation accounting. For every node,
//   committed == reserved(active instances) + released + handed_off.
struct ReservationLedger {
  ResourceVector committed;
  ResourceVector released;
  ResourceVector handed_off;
};

// The coordinator's view of its cell: members, their deployments, and the
// reservations backing those deployments.
class CellRegistry {
 public:
  explicit CellRegistry(NodeRecord coordinator);

  const NodeId& coordinator() const noexcept { return coordinator_; }
  int size() const noexcept { return static_cast<int>(members_.size()); }
  bool contains(const NodeId& id) const { return members_.contains(id); }
  const Member* find(const NodeId& id) const;
  Member* find(const NodeId& id);
  const std::map<NodeId, Member>& members() const noexcept { return members_; }

  // Throws kDuplicateMember.
  void add(NodeRecord record);
  // Drops the member and hands off the reservations of its instances.
  // Returns false when the node was not a member.
  bool remove(const NodeId& id);

  // Replaces the node's reported state. Unknown active instances are
  // adopted; instances reported stopped or failed are released. Reports
  // with a sequence number at or below the last one seen are ignored
  // (returns false). Throws kUnknownMember.
  bool apply_status(const NodeId& id, const std::optional<ResourceVector>& usage,
                    const std::optional<std::vector<Gpu>>& gpus,
                    const std::optional<std::vector<InstanceRecord>>& instances, std::optional<std::uint64_t> seq);

  // Books a dispatched instance against its node. Throws kUnknownMember.
  void reserve(InstanceRecord record);
  void set_status(const std::string& instance_id, InstanceStatus status);
  // Takes image id, params and status from the node's own record of a
  // booked instance. The reservation is unchanged.
  void refresh(const InstanceRecord& reported);
  // Releases and forgets the instance; false if it was not known.
  bool release(const std::string& instance_id);

  const std::map<std::string, InstanceRecord>& instances() const noexcept { return instances_; }
  std::vector<InstanceRecord> instances_of_task(const std::string& task_id) const;
  std::map<NodeId, std::vector<InstanceRecord>> deployments() const;

  ResourceVector reserved(const NodeId& id) const;
  const std::map<NodeId, ReservationLedger>& ledgers() const noexcept { return ledgers_; }
  bool conserved() const;

  // Record with usage = reported + reserved, ready for the scheduler.
  NodeRecord effective_record(const NodeId& id) const;
  // Active members only, sorted by id.
  std::vector<NodeRecord> schedulable_nodes() const;

  // cell.info payload. summary omits members and deployments.
  Json cell_info(bool summary) const;
  // Membership only (ids, roles, endpoints, cell); stable under status
  // syncs and liveness changes.
  Json membership_snapshot() const;

 private:
  void book(const InstanceRecord& r, int sign);

  NodeId coordinator_;
  std::map<NodeId, Member> members_;
  std::map<std::string, InstanceRecord> instances_;
  std::map<NodeId, ReservationLedger> ledgers_;
};

}  // namespace cellkit::node
