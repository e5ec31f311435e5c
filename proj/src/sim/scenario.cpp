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

#include <set>

#include "cellkit/bus/vocabulary.hpp"
#include "cellkit/sim/simnet.hpp"

namespace cellkit::sim {
namespace {

constexpr std::int64_t kDefaultSettleMs = 10000;

[[noreturn]] void script_error(const std::string& what, std::size_t index) {
  fail(ErrorCode::kScriptError, "event " + std::to_string(index) + ": " + what, {{"event_index", index}});
}

template <class T>
T field(const Json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  return it->get<T>();
}

std::set<std::string> id_set(const Json& j, const Simulation& sim, std::size_t index) {
  if (!j.is_array()) script_error("node sets must be arrays", index);
  std::set<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) script_error("node ids must be strings", index);
    const auto id = e.get<std::string>();
    if (!sim.has_node(id)) script_error("undeclared node '" + id + "'", index);
    out.insert(id);
  }
  return out;
}

Json result_json(const node::RpcResult& r) {
  if (r.response) return bus::to_envelope(*r.response);
  return Json{{"error", std::string(error_code_name(r.error->code()))}, {"detail", r.error->detail()}};
}

}  // namespace

SimNodeSpec sim_node_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
    fail(ErrorCode::kScriptError, "node declarations need a string id");
  }
  try {
    SimNodeSpec s;
    s.id = j["id"].get<std::string>();
    s.role = node_role_from_string(field<std::string>(j, "role", "primary"));
    s.arch = field<std::string>(j, "arch", s.arch);
    if (j.contains("capacity")) s.capacity = j["capacity"].get<ResourceVector>();
    if (j.contains("background")) s.background = j["background"].get<ResourceVector>();
    if (j.contains("gpu")) s.gpu = j["gpu"].get<GpuInventory>();
    if (j.contains("coordinator")) s.coordinator = j["coordinator"].get<std::string>();
    if (j.contains("fail_tasks")) s.fail_tasks = j["fail_tasks"].get<std::set<std::string>>();
    return s;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kScriptError, "node declaration: " + std::string(e.what()));
  } catch (const Error& e) {
    fail(ErrorCode::kScriptError, "node declaration: " + e.detail());
  }
}

SimConfig sim_config_from_json(const Json& script) {
  if (!script.is_object()) fail(ErrorCode::kScriptError, "a scenario is a JSON object");
  try {
    SimConfig c;
    c.seed = field<std::uint64_t>(script, "seed", c.seed);
    c.drop_rate = field<double>(script, "drop_rate", 0.0);
    c.deploy_ms = field<std::int64_t>(script, "deploy_ms", c.deploy_ms);
    if (c.drop_rate < 0.0 || c.drop_rate > 1.0) fail(ErrorCode::kScriptError, "drop_rate must lie in [0, 1]");
    if (auto it = script.find("latency"); it != script.end()) {
      const auto kind = field<std::string>(*it, "kind", "fixed");
      if (kind == "fixed") {
        c.latency.kind = LatencyModel::Kind::kFixed;
        c.latency.min_ms = c.latency.max_ms = field<std::int64_t>(*it, "ms", field<std::int64_t>(*it, "min_ms", 5));
      } else if (kind == "uniform") {
        c.latency.kind = LatencyModel::Kind::kUniform;
        c.latency.min_ms = field<std::int64_t>(*it, "min_ms", 1);
        c.latency.max_ms = field<std::int64_t>(*it, "max_ms", 10);
      } else {
        fail(ErrorCode::kScriptError, "latency kind must be fixed or uniform");
      }
      if (c.latency.min_ms < 0 || c.latency.max_ms < c.latency.min_ms) {
        fail(ErrorCode::kScriptError, "latency bounds are inverted or negative");
      }
    }
    if (auto it = script.find("timing"); it != script.end()) {
      auto& t = c.timing;
      t.presence_interval_ms = field(*it, "presence_interval_ms", t.presence_interval_ms);
      t.presence_expiry_ms = field(*it, "presence_expiry_ms", t.presence_expiry_ms);
      t.ping_interval_ms = field(*it, "ping_interval_ms", t.ping_interval_ms);
      t.ping_miss_limit = field(*it, "ping_miss_limit", t.ping_miss_limit);
      t.sync_interval_ms = field(*it, "sync_interval_ms", t.sync_interval_ms);
      t.request_timeout_ms = field(*it, "request_timeout_ms", t.request_timeout_ms);
      t.deploy_timeout_ms = field(*it, "deploy_timeout_ms", t.deploy_timeout_ms);
      t.discovery_window_ms = field(*it, "discovery_window_ms", t.discovery_window_ms);
      t.switch_timeout_ms = field(*it, "switch_timeout_ms", t.switch_timeout_ms);
      t.retry_interval_ms = field(*it, "retry_interval_ms", t.retry_interval_ms);
    }
    for (const auto& p : script.value("partitions", Json::array())) {
      PartitionSpec spec;
      spec.a = p.at("a").get<std::set<std::string>>();
      spec.b = p.at("b").get<std::set<std::string>>();
      spec.at_ms = field<std::int64_t>(p, "at_ms", 0);
      if (p.contains("until_ms")) spec.until_ms = p["until_ms"].get<std::int64_t>();
      c.partitions.push_back(std::move(spec));
    }
    return c;
  } catch (const Json::exception& e) {
    fail(ErrorCode::kScriptError, std::string("scenario header: ") + e.what());
  }
}

ScenarioResult run_scenario(const Json& script, std::optional<std::uint64_t> seed) {
  auto config = sim_config_from_json(script);
  if (seed) config.seed = *seed;

  SkillLibrary library;
  if (auto it = script.find("library"); it != script.end()) {
    try {
      library = skill_library_from_json(*it);
    } catch (const Error& e) {
      fail(ErrorCode::kScriptError, "library: " + e.detail());
    }
  }

  std::vector<SimNodeSpec> specs;
  for (const auto& n : script.value("nodes", Json::array())) specs.push_back(sim_node_from_json(n));
  for (const auto& p : config.partitions) {
    for (const auto* side : {&p.a, &p.b}) {
      for (const auto& id : *side) {
        if (std::none_of(specs.begin(), specs.end(), [&](const SimNodeSpec& s) { return s.id == id; })) {
          fail(ErrorCode::kScriptError, "partition names undeclared node '" + id + "'");
        }
      }
    }
  }

  Simulation sim(config, library);
  for (const auto& s : specs) sim.add_node(s);
  for (const auto& s : specs) {
    if (s.coordinator && !sim.has_node(*s.coordinator)) {
      fail(ErrorCode::kScriptError, "node '" + s.id + "' names undeclared coordinator '" + *s.coordinator + "'");
    }
  }

  const auto events = script.value("events", Json::array());
  if (!events.is_array()) fail(ErrorCode::kScriptError, "events must be an array");

  ScenarioResult out;
  auto need = [&](const Json& e, const char* key, std::size_t i) -> std::string {
    auto it = e.find(key);
    if (it == e.end() || !it->is_string()) script_error(std::string("missing string field '") + key + "'", i);
    const auto id = it->get<std::string>();
    return id;
  };
  auto need_node = [&](const Json& e, const char* key, std::size_t i) {
    auto id = need(e, key, i);
    if (!sim.has_node(id)) script_error("undeclared node '" + id + "'", i);
    return id;
  };
  auto issue = [&](std::size_t i, const std::string& op, const std::string& target, bus::Message m) {
    sim.record("op.request", {{"index", i}, {"op", op}, {"target", target}, {"msg_type", m.msg_type}});
    auto r = sim.call(target, std::move(m));
    const bool ok = r.ok() && !r.rejected();
    Json entry{{"index", i}, {"op", op}, {"ok", ok}, {"response", result_json(r)}};
    sim.record("op.result", {{"index", i}, {"op", op}, {"ok", ok}, {"reason", r.reason()}});
    out.results.push_back(std::move(entry));
  };

  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (!e.is_object() || !e.contains("op") || !e["op"].is_string()) script_error("event needs a string op", i);
    const auto op = e["op"].get<std::string>();
    try {
      if (op == "start") {
        sim.record("op", {{"index", i}, {"op", op}});
        sim.start(need_node(e, "node", i));
      } else if (op == "stop") {
        sim.record("op", {{"index", i}, {"op", op}});
        sim.stop(need_node(e, "node", i));
      } else if (op == "join") {
        const auto id = need_node(e, "node", i);
        sim.record("op", {{"index", i}, {"op", op}, {"node", id}});
        if (sim.node(id).config().role != NodeRole::kPrimary) script_error("only primaries join", i);
        if (sim.up(id)) {
          sim.node(id).rejoin();
        } else {
          sim.start(id);
        }
      } else if (op == "leave") {
        const auto id = need_node(e, "node", i);
        sim.record("op", {{"index", i}, {"op", op}, {"node", id}});
        sim.node(id).leave();
      } else if (op == "transfer") {
        const auto primary = need_node(e, "primary", i);
        const auto dest = need_node(e, "dest", i);
        std::string via = e.contains("via") ? need_node(e, "via", i) : std::string();
        if (via.empty()) {
          auto c = sim.node(primary).cell();
          via = c ? c->value : dest;
        }
        issue(i, op, via,
              bus::make_request(bus::msg::kCellTransfer, {{"primary", primary}, {"dest_coordinator", dest}}));
      } else if (op == "submit") {
        const auto via = need_node(e, "via", i);
        if (!e.contains("pipeline")) script_error("submit needs a pipeline", i);
        issue(i, op, via, bus::make_request(bus::msg::kTaskSubmit, {{"pipeline", e["pipeline"]}}));
      } else if (op == "terminate") {
        const auto via = need_node(e, "via", i);
        issue(i, op, via, bus::make_request(bus::msg::kTaskTerminate, {{"task_id", need(e, "task_id", i)}}));
      } else if (op == "partition") {
        sim.partition(id_set(e.value("a", Json()), sim, i), id_set(e.value("b", Json()), sim, i));
      } else if (op == "heal") {
        sim.heal();
      } else if (op == "settle") {
        const auto ms = field<std::int64_t>(e, "ms", kDefaultSettleMs);
        if (ms < 0) script_error("settle duration must be non-negative", i);
        sim.run_for(ms);
      } else {
        script_error("unknown op '" + op + "'", i);
      }
    } catch (const Json::exception& ex) {
      script_error(ex.what(), i);
    }
  }

  out.trace = sim.trace();
  out.registries = sim.registries();
  return out;
}

}  // namespace cellkit::sim
