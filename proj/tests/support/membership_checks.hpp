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

// Independent checks of the cell invariants, computed only from what each
// node and each registry reports about itself.

#include <map>
#include <string>
#include <vector>

#include "cellkit/sim/simnet.hpp"

namespace checks {

using namespace cellkit;

inline bool quiescent(const sim::Simulation& sim) {
  for (const auto& id : sim.node_ids()) {
    if (!sim.up(id)) continue;
    const auto& n = sim.node(id);
    if (n.state() == node::NodeState::kDiscovering || n.state() == node::NodeState::kJoining) return false;
    if (n.switching() || !n.pending_departures().empty()) return false;
  }
  return true;
}

// Heals the network and runs until every node is idle and one more
// liveness round has passed. Returns false if the system never settles.
inline bool settle_healed(sim::Simulation& sim, std::int64_t limit_ms = 60000) {
  sim.heal();
  if (!sim.run_until([&] { return quiescent(sim); }, limit_ms)) return false;
  sim.run_for(12000);
  return sim.run_until([&] { return quiescent(sim); }, limit_ms);
}

// Empty when every invariant holds; otherwise one line per violation.
inline std::vector<std::string> membership_violations(const sim::Simulation& sim) {
  std::vector<std::string> out;
  std::map<std::string, std::vector<std::string>> holders;
  for (const auto& id : sim.node_ids()) {
    if (!sim.up(id)) continue;
    const auto* reg = sim.node(id).registry();
    if (!reg) continue;
    int coordinators = 0;
    for (const auto& [mid, m] : reg->members()) {
      if (m.record.role == NodeRole::kCoordinator) ++coordinators;
      if (!m.record.cell || m.record.cell->value != id) {
        out.push_back(id + ": member " + mid.value + " carries the wrong cell");
      }
      if (mid.value != id) holders[mid.value].push_back(id);
    }
    if (coordinators != 1 || !reg->contains(NodeId(id))) out.push_back(id + ": coordinator row is wrong");
    if (!reg->conserved()) out.push_back(id + ": reservation ledger does not balance");
  }
  for (const auto& id : sim.node_ids()) {
    const auto& n = sim.node(id);
    if (n.config().role != NodeRole::kPrimary) continue;
    const auto& where = holders[id];
    if (where.size() > 1) out.push_back(id + ": listed by " + std::to_string(where.size()) + " registries");
    if (!sim.up(id)) continue;
    if (n.state() == node::NodeState::kMember) {
      if (where.size() != 1 || !n.cell() || where.front() != n.cell()->value) {
        out.push_back(id + ": believes it belongs to " + (n.cell() ? n.cell()->value : "?") +
                      " but is listed by " + (where.empty() ? "none" : where.front()));
      }
    } else if (n.state() == node::NodeState::kIndependent && !where.empty()) {
      out.push_back(id + ": independent yet listed by " + where.front());
    }
  }
  return out;
}

}  // namespace checks
