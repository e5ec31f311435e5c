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

#include "cellkit/node/registry.hpp"

#include "cellkit/core/error.hpp"

namespace cellkit::node {

CellRegistry::CellRegistry(NodeRecord coordinator) : coordinator_(coordinator.id) {
  coordinator.role = NodeRole::kCoordinator;
  add(std::move(coordinator));
}

const Member* CellRegistry::find(const NodeId& id) const {
  auto it = members_.find(id);
  return it == members_.end() ? nullptr : &it->second;
}

Member* CellRegistry::find(const NodeId& id) {
  auto it = members_.find(id);
  return it == members_.end() ? nullptr : &it->second;
}

void CellRegistry::add(NodeRecord record) {
  if (members_.contains(record.id)) {
    fail(ErrorCode::kDuplicateMember, record.id.value + " is already a member of " + coordinator_.value);
  }
  record.cell = coordinator_;
  const auto id = record.id;
  members_.emplace(id, Member{std::move(record), true, 0, std::nullopt});
  ledgers_.try_emplace(id);
}

bool CellRegistry::remove(const NodeId& id) {
  if (id == coordinator_) fail(ErrorCode::kInvalidArgument, "the coordinator cannot leave its own cell");
  if (members_.erase(id) == 0) return false;
  auto& ledger = ledgers_[id];
  for (auto it = instances_.begin(); it != instances_.end();) {
    if (it->second.node == id) {
      ledger.handed_off += it->second.request;
      it = instances_.erase(it);
    } else {
      ++it;
    }
  }
  return true;
}

void CellRegistry::book(const InstanceRecord& r, int sign) {
  auto& ledger = ledgers_[r.node];
  if (sign > 0) {
    ledger.committed += r.request;
  } else {
    ledger.released += r.request;
  }
}

void CellRegistry::reserve(InstanceRecord record) {
  if (!contains(record.node)) fail(ErrorCode::kUnknownMember, record.node.value + " is not a member");
  if (instances_.contains(record.instance_id)) {
    fail(ErrorCode::kInvalidArgument, "instance " + record.instance_id + " is already booked");
  }
  book(record, +1);
  instances_.emplace(record.instance_id, std::move(record));
}

void CellRegistry::set_status(const std::string& instance_id, InstanceStatus status) {
  auto it = instances_.find(instance_id);
  if (it == instances_.end()) return;
  if (!is_active(status)) {
    release(instance_id);
    return;
  }
  it->second.status = status;
}

void CellRegistry::refresh(const InstanceRecord& reported) {
  auto it = instances_.find(reported.instance_id);
  if (it == instances_.end()) return;
  it->second.image_id = reported.image_id;
  it->second.params = reported.params;
  set_status(reported.instance_id, reported.status);
}

bool CellRegistry::release(const std::string& instance_id) {
  auto it = instances_.find(instance_id);
  if (it == instances_.end()) return false;
  book(it->second, -1);
  instances_.erase(it);
  return true;
}

bool CellRegistry::apply_status(const NodeId& id, const std::optional<ResourceVector>& usage,
                                const std::optional<std::vector<Gpu>>& gpus,
                                const std::optional<std::vector<InstanceRecord>>& instances,
                                std::optional<std::uint64_t> seq) {
  Member* m = find(id);
  if (!m) fail(ErrorCode::kUnknownMember, id.value + " is not a member of " + coordinator_.value);
  if (seq && m->last_seq && *seq <= *m->last_seq) return false;
  if (seq) m->last_seq = seq;
  if (usage) m->record.usage = *usage;
  if (gpus) {
    for (const auto& g : *gpus) {
      for (auto& mine : m->record.gpu.gpus) {
        if (mine.gpu_id == g.gpu_id) mine.mem_used = g.mem_used;
      }
    }
  }
  if (instances) {
    for (auto r : *instances) {
      if (r.node != id) continue;
      auto known = instances_.find(r.instance_id);
      if (known == instances_.end()) {
        // Instances the node brought with it (e.g. from a previous cell).
        if (is_active(r.status)) reserve(std::move(r));
        continue;
      }
      set_status(r.instance_id, r.status);
    }
  }
  return true;
}

std::vector<InstanceRecord> CellRegistry::instances_of_task(const std::string& task_id) const {
  std::vector<InstanceRecord> out;
  for (const auto& [_, r] : instances_) {
    if (r.task_id == task_id) out.push_back(r);
  }
  return out;
}

std::map<NodeId, std::vector<InstanceRecord>> CellRegistry::deployments() const {
  std::map<NodeId, std::vector<InstanceRecord>> out;
  for (const auto& [_, r] : instances_) out[r.node].push_back(r);
  return out;
}

ResourceVector CellRegistry::reserved(const NodeId& id) const {
  ResourceVector total;
  for (const auto& [_, r] : instances_) {
    if (r.node == id) total += r.request;
  }
  return total;
}

bool CellRegistry::conserved() const {
  for (const auto& [id, l] : ledgers_) {
    auto rhs = l.released;
    rhs += l.handed_off;
    if (contains(id)) rhs += reserved(id);
    if (!(rhs == l.committed)) return false;
  }
  return true;
}

NodeRecord CellRegistry::effective_record(const NodeId& id) const {
  const Member* m = find(id);
  if (!m) fail(ErrorCode::kUnknownMember, id.value + " is not a member");
  NodeRecord rec = m->record;
  for (const auto& [_, r] : instances_) {
    if (r.node != id) continue;
    rec.usage.cpu += r.request.cpu;
    rec.usage.disk += r.request.disk;
    rec.usage.mem += r.request.mem;
    if (rec.gpu.unified_memory) {
      // GPU memory comes out of the shared pool.
      rec.usage.mem += r.request.gmem;
    } else if (r.gpu_id) {
      rec.usage.gmem += r.request.gmem;
      for (auto& g : rec.gpu.gpus) {
        if (g.gpu_id == *r.gpu_id) g.mem_used += r.request.gmem;
      }
    }
  }
  return rec;
}

std::vector<NodeRecord> CellRegistry::schedulable_nodes() const {
  std::vector<NodeRecord> out;
  for (const auto& [id, m] : members_) {
    if (m.active) out.push_back(effective_record(id));
  }
  return out;
}

Json CellRegistry::cell_info(bool summary) const {
  Json j{{"coordinator", coordinator_.value}, {"cell_size", size()}};
  if (summary) return j;
  Json members = Json::array();
  for (const auto& [id, m] : members_) {
    members.push_back({{"record", effective_record(id)}, {"active", m.active}, {"reserved", reserved(id)}});
  }
  j["members"] = std::move(members);
  Json deps = Json::object();
  for (const auto& [node, list] : deployments()) deps[node.value] = list;
  j["deployments"] = std::move(deps);
  return j;
}

Json CellRegistry::membership_snapshot() const {
  Json out = Json::array();
  for (const auto& [id, m] : members_) {
    out.push_back({{"id", id.value},
                   {"role", std::string(to_string(m.record.role))},
                   {"control_endpoint", m.record.control_endpoint.str()},
                   {"registry_switch_endpoint", m.record.registry_switch_endpoint.str()},
                   {"cell", m.record.cell ? m.record.cell->value : ""}});
  }
  return out;
}

}  // namespace cellkit::node
