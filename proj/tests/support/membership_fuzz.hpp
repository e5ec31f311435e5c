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

// Random join/leave/transfer/partition sequences against a small
// simulated deployment, with invariant checks at healed quiescent points.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "cellkit/bus/vocabulary.hpp"
#include "membership_checks.hpp"

namespace fuzz {

using namespace cellkit;

struct Outcome {
  std::vector<std::string> violations;
  int checkpoints = 0;
  int transfers = 0;
  int switch_failed = 0;
  int moved = 0;
  // Transfer outcomes by reason code ("ok" for acks).
  std::map<std::string, int> reasons;
};

struct Shape {
  int coordinators = 3;
  int primaries = 6;
  int ops = 10;
};

inline std::string cid(int i) { return "c" + std::to_string(i + 1); }
inline std::string pid(int i) { return "p" + std::to_string(i + 1); }

inline Outcome run_sequence(std::uint64_t seed, Shape shape = {}) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  auto pick = [&](int n) { return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng)); };

  sim::SimConfig cfg;
  cfg.seed = seed;
  cfg.latency = {sim::LatencyModel::Kind::kUniform, 1, 15};
  cfg.drop_rate = 0.05;
  sim::Simulation s(cfg);
  std::vector<std::string> all;
  for (int i = 0; i < shape.coordinators; ++i) {
    s.add_node({.id = cid(i), .role = NodeRole::kCoordinator});
    all.push_back(cid(i));
  }
  for (int i = 0; i < shape.primaries; ++i) {
    s.add_node({.id = pid(i)});
    all.push_back(pid(i));
  }
  for (int i = 0; i < shape.coordinators; ++i) s.start(cid(i));
  s.run_for(2500);
  // Most primaries start out in a cell; the rest join later.
  for (int i = 0; i < shape.primaries; ++i) {
    if (pick(4) != 0) s.start(pid(i));
  }
  s.run_for(6000);

  Outcome out;
  auto check = [&](const std::string& where) {
    ++out.checkpoints;
    if (!checks::settle_healed(s)) {
      out.violations.push_back(where + ": never reached a quiescent state");
      return;
    }
    for (auto& v : checks::membership_violations(s)) out.violations.push_back(where + ": " + v);
  };

  for (int k = 0; k < shape.ops; ++k) {
    const std::string at = "seed " + std::to_string(seed) + " op " + std::to_string(k);
    const int kind = pick(10);
    if (kind < 3) {
      const auto p = pid(pick(shape.primaries));
      s.up(p) ? s.node(p).rejoin() : s.start(p);
    } else if (kind < 4) {
      s.node(pid(pick(shape.primaries))).leave();
    } else if (kind < 7) {
      const auto p = pid(pick(shape.primaries));
      const auto dest = cid(pick(shape.coordinators));
      const auto via = cid(pick(shape.coordinators));
      const auto src = s.node(p).cell();
      const bool calm = checks::quiescent(s);
      Json before_src, before_dst;
      if (src && s.node(src->value).registry()) before_src = s.node(src->value).registry()->membership_snapshot();
      before_dst = s.node(dest).registry()->membership_snapshot();
      ++out.transfers;
      auto r = s.call(via, bus::make_request(bus::msg::kCellTransfer, {{"primary", p}, {"dest_coordinator", dest}}));
      if (r.ok() && !r.rejected() && r.response->payload.value("moved", false)) ++out.moved;
      ++out.reasons[r.ok() && !r.rejected() ? "ok" : r.reason()];
      if (r.rejected() && r.reason() == "SwitchFailed") {
        ++out.switch_failed;
        if (calm && src) {
          // Atomicity: once the dust settles nothing may have changed.
          check(at + " after SwitchFailed");
          if (s.node(src->value).registry()->membership_snapshot() != before_src ||
              s.node(dest).registry()->membership_snapshot() != before_dst) {
            out.violations.push_back(at + ": SwitchFailed changed a registry");
          }
        }
      }
    } else if (kind < 9) {
      std::set<std::string> a, b;
      for (const auto& id : all) (pick(2) ? a : b).insert(id);
      s.partition(a, b);
    } else {
      s.heal();
      check(at + " heal");
    }
    s.run_for(pick(8000));
  }
  check("seed " + std::to_string(seed) + " end");
  if (s.unsound_announcements() != 0) out.violations.push_back("unsound presence announcements");
  return out;
}

}  // namespace fuzz
