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

// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria. Tolerances and sizes are fixed below.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "../support/fixtures.hpp"
#include "../support/membership_checks.hpp"
#include "../support/membership_fuzz.hpp"
#include "../support/net_cluster.hpp"
#include "../support/scheduler_oracle.hpp"
#include "cellkit/bus/handler_registry.hpp"
#include "cellkit/bus/tcp.hpp"
#include "cellkit/bus/vocabulary.hpp"
#include "cellkit/core/error.hpp"
#include "cellkit/deploy/backend.hpp"
#include "cellkit/deploy/image_cache.hpp"
#include "cellkit/deploy/instance_manager.hpp"
#include "cellkit/net/net_node.hpp"
#include "cellkit/sched/scheduler.hpp"
#include "cellkit/sim/simnet.hpp"

using namespace cellkit;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

constexpr double kScoreTolerance = 1e-9;
constexpr double kHandTolerance = 1e-12;
constexpr int kOracleSeeds = 1000;
constexpr int kBalanceSeeds = 100;
constexpr int kFuzzSequences = 10000;
constexpr int kPipelineItems = 100;
constexpr auto kOracleBudget = 60s;
constexpr auto kBalanceBudget = 10s;
constexpr auto kCacheBudget = 1s;
constexpr auto kWalkthroughBudget = 30s;

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Maps a returned scheme back onto the oracle's picks so the oracle's own
// integer constraint check can judge it.
std::optional<std::vector<oracle::Pick>> picks_of(const AllocationScheme& s, const oracle::Instance& inst,
                                                  std::vector<std::vector<DeploymentOption>>& deps) {
  std::vector<oracle::Pick> out;
  deps.clear();
  for (const auto& t : inst.pipeline.tasks) deps.push_back(resolve_deployments(inst.library, t));
  for (std::size_t i = 0; i < s.assignments.size(); ++i) {
    const auto& a = s.assignments[i];
    oracle::Pick p;
    auto node = std::find_if(inst.nodes.begin(), inst.nodes.end(), [&](const auto& n) { return n.id == a.node; });
    if (node == inst.nodes.end()) return std::nullopt;
    p.node = static_cast<std::size_t>(node - inst.nodes.begin());
    for (const auto& d : deps[i]) {
      if (d.deployment_id == a.deployment_id) p.dep = &d;
    }
    if (p.dep == nullptr) return std::nullopt;
    if (a.gpu_id) {
      const auto& gpus = node->gpu.gpus;
      auto g = std::find_if(gpus.begin(), gpus.end(), [&](const auto& x) { return x.gpu_id == *a.gpu_id; });
      if (g == gpus.end()) return std::nullopt;
      p.gpu = static_cast<int>(g - gpus.begin());
    }
    out.push_back(p);
  }
  return out;
}

// Runs the oracle comparison once and shares the outcome between the
// equivalence and soundness criteria.
struct OracleRun {
  int instances = 0;
  int feasible = 0;
  int score_mismatch = 0;
  int scheme_mismatch = 0;
  int feasibility_mismatch = 0;
  int constraint_violations = 0;
  int schemes_checked = 0;
  double seconds = 0.0;
};

const OracleRun& oracle_run() {
  static const OracleRun run = [] {
    OracleRun r;
    const auto t0 = Clock::now();
    for (std::uint64_t seed = 1; seed <= kOracleSeeds; ++seed) {
      const auto inst = oracle::random_instance(seed);
      ++r.instances;
      const auto ref = oracle::solve(inst.pipeline, inst.nodes, inst.library);
      std::optional<sched::ScoredScheme> got;
      try {
        got = sched::select_allocation(inst.pipeline, inst.nodes, inst.library);
      } catch (const Error&) {
      }
      if (got.has_value() != ref.feasible) {
        ++r.feasibility_mismatch;
        continue;
      }
      if (!ref.feasible) continue;
      ++r.feasible;
      if (std::abs(got->total - ref.best_total) > kScoreTolerance) ++r.score_mismatch;
      if (!(got->scheme == ref.best)) ++r.scheme_mismatch;

      std::vector<std::vector<DeploymentOption>> deps;
      auto judge = [&](const AllocationScheme& s) {
        ++r.schemes_checked;
        const auto picks = picks_of(s, inst, deps);
        if (!picks || !oracle::satisfies_constraints(inst.nodes, *picks)) ++r.constraint_violations;
      };
      judge(got->scheme);
      for (const auto& s : sched::enumerate_schemes(inst.pipeline, inst.nodes, inst.library)) judge(s);
    }
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Verdict oracle_equivalence() {
  const auto& r = oracle_run();
  std::ostringstream d;
  d << r.instances << " instances, " << r.feasible << " feasible; mismatches score=" << r.score_mismatch
    << " scheme=" << r.scheme_mismatch << " feasibility=" << r.feasibility_mismatch << "; " << r.seconds << " s";
  const bool ok = r.score_mismatch == 0 && r.scheme_mismatch == 0 && r.feasibility_mismatch == 0 &&
                  r.feasible > 0 && r.seconds < std::chrono::duration<double>(kOracleBudget).count();
  return {ok, d.str()};
}

Verdict constraint_soundness() {
  const auto& r = oracle_run();
  std::ostringstream d;
  d << r.schemes_checked << " schemes checked, " << r.constraint_violations << " violations";
  return {r.constraint_violations == 0 && r.schemes_checked > 0, d.str()};
}

const ResourceVector kBox{4000, 8 * kGiB, 8 * kGiB, 0};

Verdict hyperparameters() {
  using fixtures::node;
  using fixtures::option;
  using fixtures::skill;
  using fixtures::task;
  std::ostringstream d;
  bool ok = true;

  // Every fraction is 1/4 on every node, so only the GPU bonus separates
  // the two schemes.
  for (int n = 1; n <= 3; ++n) {
    SkillLibrary lib{skill("op", {option("cpu", {1000, 2 * kGiB, 2 * kGiB, 0}),
                                  option("gpu", {1000, 2 * kGiB, 2 * kGiB, 2 * kGiB})})};
    TaskPipeline p;
    std::vector<NodeRecord> nodes;
    AllocationScheme cpu, gpu;
    for (int i = 0; i < n; ++i) {
      const auto id = "t" + std::to_string(i);
      const auto host = "h" + std::to_string(i);
      p.tasks.push_back(task(id, "op"));
      auto v = node(host, kBox);
      v.gpu.gpus.push_back({"gpu0", 8 * kGiB, 0});
      nodes.push_back(v);
      cpu.assignments.push_back({id, NodeId(host), "cpu", {}});
      gpu.assignments.push_back({id, NodeId(host), i == 0 ? "gpu" : "cpu", i == 0 ? std::optional<std::string>("gpu0")
                                                                              : std::nullopt});
    }
    const double diff = sched::score_scheme(gpu, p, nodes, lib).total - sched::score_scheme(cpu, p, nodes, lib).total;
    const double expect = -0.01 / n;
    d << "n=" << n << " gpu-cpu=" << diff << " ";
    ok = ok && diff == expect;
  }

  // Hand computation: loads 1/4 and 1/2 give a variance of 1/64; the packed
  // scheme has one hosting node and no load variance.
  SkillLibrary lib{skill("small", {option("cpu", {1000, 2 * kGiB, 2 * kGiB, 0})}),
                   skill("large", {option("cpu", {2000, 4 * kGiB, 4 * kGiB, 0})})};
  TaskPipeline p{{task("t1", "small"), task("t2", "large")}};
  std::vector<NodeRecord> nodes{node("a", kBox), node("b", kBox)};
  const AllocationScheme split{{{"t1", NodeId("a"), "cpu", {}}, {"t2", NodeId("b"), "cpu", {}}}};
  const AllocationScheme packed{{{"t1", NodeId("a"), "cpu", {}}, {"t2", NodeId("a"), "cpu", {}}}};
  const auto a = sched::score_scheme(split, p, nodes, lib);
  const auto b = sched::score_scheme(packed, p, nodes, lib);
  const double load_term = a.load_variance_term - b.load_variance_term;
  const double sigma_bar = a.fraction_variance_term - b.fraction_variance_term;
  const double hand = sigma_bar + 0.1 * (1.0 / 64.0);
  const double err = std::abs((a.total - b.total) - hand);
  d << "sigma_load=" << load_term << " alpha-err=" << err;
  ok = ok && load_term == 1.0 / 64.0 && err <= kHandTolerance;
  return {ok, d.str()};
}

Verdict uniform_scaling() {
  int compared = 0, drift = 0, argmin_changed = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    const auto inst = oracle::random_instance(seed);
    std::vector<AllocationScheme> schemes;
    try {
      schemes = sched::enumerate_schemes(inst.pipeline, inst.nodes, inst.library);
    } catch (const Error&) {
      continue;
    }
    if (schemes.empty()) continue;
    const auto base = sched::select_allocation(inst.pipeline, inst.nodes, inst.library);
    for (std::int64_t k : {2, 10, 1000}) {
      auto nodes = inst.nodes;
      auto lib = inst.library;
      for (auto& n : nodes) {
        n.capacity = n.capacity.scaled(k);
        n.usage = n.usage.scaled(k);
        for (auto& g : n.gpu.gpus) {
          g.mem_capacity *= k;
          g.mem_used *= k;
        }
      }
      for (auto& s : lib) {
        for (auto& m : s.models) {
          for (auto& o : m.deployments) o.request = o.request.scaled(k);
        }
      }
      for (const auto& s : schemes) {
        const double before = sched::score_scheme(s, inst.pipeline, inst.nodes, inst.library).total;
        const double after = sched::score_scheme(s, inst.pipeline, nodes, lib).total;
        worst = std::max(worst, std::abs(after - before));
        if (std::abs(after - before) > kScoreTolerance) ++drift;
        ++compared;
      }
      if (!(sched::select_allocation(inst.pipeline, nodes, lib).scheme == base.scheme)) ++argmin_changed;
    }
  }
  std::ostringstream d;
  d << compared << " scheme scores compared, worst drift " << worst << ", argmin changes " << argmin_changed;
  return {compared > 0 && drift == 0 && argmin_changed == 0, d.str()};
}

Verdict size_balance() {
  const auto t0 = Clock::now();
  int unbalanced = 0;
  std::string first_bad;
  for (std::uint64_t seed = 1; seed <= kBalanceSeeds; ++seed) {
    sim::SimConfig cfg;
    cfg.seed = seed;
    cfg.latency = {sim::LatencyModel::Kind::kUniform, 1, 15};
    sim::Simulation s(cfg);
    for (int i = 1; i <= 3; ++i) s.add_node({.id = "c" + std::to_string(i), .role = NodeRole::kCoordinator});
    for (int i = 1; i <= 12; ++i) s.add_node({.id = "p" + std::to_string(i)});
    for (int i = 1; i <= 3; ++i) s.start("c" + std::to_string(i));
    s.run_for(2500);
    for (int i = 1; i <= 12; ++i) {
      s.start("p" + std::to_string(i));
      s.run_for(4000);
    }
    std::vector<std::size_t> sizes;
    for (int i = 1; i <= 3; ++i) sizes.push_back(s.node("c" + std::to_string(i)).registry()->size());
    const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
    std::size_t total = 0;
    for (auto z : sizes) total += z;
    if (*hi - *lo > 1 || total != 15) {
      if (++unbalanced == 1) first_bad = " first at seed " + std::to_string(seed);
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << kBalanceSeeds << " seeds, " << unbalanced << " unbalanced" << first_bad << "; " << secs << " s";
  return {unbalanced == 0 && secs < std::chrono::duration<double>(kBalanceBudget).count(), d.str()};
}

Verdict membership_safety() {
  const auto t0 = Clock::now();
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::atomic<int> next{1};
  std::mutex mu;
  std::vector<std::string> violations;
  long checkpoints = 0, transfers = 0, moved = 0, failed = 0;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int seed = next++; seed <= kFuzzSequences; seed = next++) {
        auto out = fuzz::run_sequence(static_cast<std::uint64_t>(seed));
        std::lock_guard lk(mu);
        checkpoints += out.checkpoints;
        transfers += out.transfers;
        moved += out.moved;
        failed += out.switch_failed;
        for (auto& v : out.violations) violations.push_back(std::move(v));
      }
    });
  }
  for (auto& t : pool) t.join();
  std::ostringstream d;
  d << kFuzzSequences << " sequences, " << checkpoints << " checkpoints, " << transfers << " transfers (" << moved
    << " moved, " << failed << " switch failures), " << violations.size() << " violations; " << seconds_since(t0)
    << " s";
  if (!violations.empty()) d << "; first: " << violations.front();
  return {violations.empty() && moved > 0, d.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("cellkit-acceptance-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const SkillLibrary& shipped_skills() {
  static const SkillLibrary lib = load_skill_library(CELLKIT_SOURCE_DIR "/skills");
  return lib;
}

Verdict image_cache_reuse() {
  const auto root = scratch("cache");
  const auto t0 = Clock::now();
  deploy::ProcessBackend backend({root, CELLKIT_ENGINE_BIN, 50ms, 2000ms});
  deploy::ImageCache cache;
  deploy::InstanceManager mgr(NodeId("node-a"), backend, cache);
  const auto* relay = find_operation(shipped_skills(), "relay");
  const auto* model = relay->find_model("identity");
  auto request = [&](const std::string& id, std::string base) {
    TaskSpec t;
    t.task_id = "task-" + id;
    t.operation_name = "relay";
    t.model_name = "identity";
    t.input = {"file", (root / (id + ".in")).string()};
    t.output = {"file", (root / (id + ".out")).string()};
    auto dep = model->deployments.front();
    if (!base.empty()) dep.base_image = std::move(base);
    return deploy::DeployRequest{t, *model, dep, std::nullopt, id};
  };
  mgr.deploy(request("i-1", ""));
  mgr.deploy(request("i-2", ""));
  const auto builds_same = cache.build_counter();
  const auto reuses_same = cache.reuse_counter();
  mgr.deploy(request("i-3", "debian:trixie-slim"));
  const auto builds_changed = cache.build_counter();
  mgr.stop_all();
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "same skill: build=" << builds_same << " reuse=" << reuses_same << "; new base image: build=" << builds_changed
    << "; " << secs << " s";
  return {builds_same == 1 && reuses_same == 1 && builds_changed == 2 &&
              secs < std::chrono::duration<double>(kCacheBudget).count(),
          d.str()};
}

std::uint16_t free_port() {
  bus::TcpServer probe("127.0.0.1", 0, [](const bus::Message&, bus::Reply) {});
  return probe.port();
}

// Plays the downstream end of the last tcp-lines link.
class LineSink {
 public:
  LineSink() {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = 0;
    ::inet_pton(AF_INET, "127.0.0.1", &a.sin_addr);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&a), sizeof(a)) != 0 || ::listen(fd_, 4) != 0) {
      fail(ErrorCode::kPortInUse, "sink listen");
    }
    socklen_t len = sizeof(a);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&a), &len);
    port_ = ntohs(a.sin_port);
    thread_ = std::thread([this] { loop(); });
  }
  ~LineSink() {
    stop_ = true;
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    thread_.join();
  }
  std::uint16_t port() const { return port_; }
  std::vector<std::string> lines() {
    std::lock_guard lk(mu_);
    return lines_;
  }

 private:
  void loop() {
    while (!stop_) {
      const int c = ::accept(fd_, nullptr, nullptr);
      if (c < 0) return;
      std::string buf;
      char chunk[4096];
      timeval tv{0, 200000};
      ::setsockopt(c, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
      while (!stop_) {
        const ssize_t n = ::recv(c, chunk, sizeof(chunk), 0);
        if (n == 0) break;
        if (n < 0) {
          if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
          break;
        }
        buf.append(chunk, static_cast<std::size_t>(n));
        for (auto nl = buf.find('\n'); nl != std::string::npos; nl = buf.find('\n')) {
          std::lock_guard lk(mu_);
          lines_.push_back(buf.substr(0, nl));
          buf.erase(0, nl + 1);
        }
      }
      ::close(c);
    }
  }

  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::mutex mu_;
  std::vector<std::string> lines_;
  std::thread thread_;
};

int connect_with_retry(std::uint16_t port, std::chrono::milliseconds budget) {
  const auto deadline = Clock::now() + budget;
  while (Clock::now() < deadline) {
    const int s = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    sockaddr_in a{};
    a.sin_family = AF_INET;
    a.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &a.sin_addr);
    if (::connect(s, reinterpret_cast<sockaddr*>(&a), sizeof(a)) == 0) return s;
    ::close(s);
    std::this_thread::sleep_for(20ms);
  }
  return -1;
}

Json members_of(net::NetNode& c) {
  return c.inspect([](const node::Node& n) { return n.registry()->cell_info(false)["members"]; });
}

bool reserved_matches(const Json& now, const Json& baseline) {
  if (now.size() != baseline.size()) return false;
  for (std::size_t i = 0; i < now.size(); ++i) {
    const auto& a = now[i];
    const auto& b = baseline[i];
    if (a.at("record").at("id") != b.at("record").at("id") || a.at("reserved") != b.at("reserved") ||
        a.at("active") != b.at("active")) {
      return false;
    }
  }
  return true;
}

Verdict walkthrough() {
  const auto t0 = Clock::now();
  const auto root = scratch("walkthrough");
  const auto group = netfix::private_group();
  std::ostringstream d;
  auto make = [&](NodeRole role, const std::string& id) {
    auto o = netfix::options(role, id, group);
    o.library = shipped_skills();
    o.runtime_root = root / id;
    o.engine_binary = CELLKIT_ENGINE_BIN;
    return o;
  };

  net::NetNode c1(make(NodeRole::kCoordinator, "c1"));
  auto po = make(NodeRole::kPrimary, "p1");
  po.coordinator_endpoint = c1.control_endpoint();
  net::NetNode p1(po);
  net::NetNode p2(make(NodeRole::kPrimary, "p2"));
  if (!netfix::eventually([&] { return netfix::cell_size(c1) == 3; }, 10000)) {
    return {false, "cell never reached three members"};
  }
  const auto baseline = members_of(c1);

  LineSink sink;
  const auto in_port = free_port();
  const auto mid_port = free_port();
  auto link = [](std::uint16_t port) { return IoEndpoint{"tcp-lines", "127.0.0.1:" + std::to_string(port)}; };
  TaskSpec t1{"walk-1", "relay", "identity", link(in_port), link(mid_port), std::nullopt};
  TaskSpec t2{"walk-2", "relay", "identity", link(mid_port), link(sink.port()), std::nullopt};
  const Json pipeline = TaskPipeline{{t1, t2}};
  const auto ack = netfix::rpc(c1.control_endpoint(), bus::msg::kTaskSubmit, {{"pipeline", pipeline}});
  if (ack.msg_type != std::string(bus::kAck)) return {false, "submit refused: " + ack.payload.dump()};
  std::set<std::string> hosts;
  for (const auto& a : ack.payload["scheme"]["assignments"]) hosts.insert(a["node"].get<std::string>());
  d << "placed on {";
  for (const auto& h : hosts) d << " " << h;
  d << " }; ";
  // The reservations must have moved for the return to baseline to mean anything.
  const bool reserved_while_running = !reserved_matches(members_of(c1), baseline);

  const int feed = connect_with_retry(in_port, 10s);
  if (feed < 0) return {false, d.str() + "first instance never listened"};
  std::string stream;
  for (int i = 0; i < kPipelineItems; ++i) stream += Json{{"seq", i}}.dump() + "\n";
  bus::write_all(feed, stream);

  const bool arrived =
      netfix::eventually([&] { return sink.lines().size() >= static_cast<std::size_t>(kPipelineItems); }, 15000);
  ::close(feed);
  const auto got = sink.lines();
  int in_order = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    try {
      if (Json::parse(got[i]).value("seq", -1) == static_cast<int>(i)) ++in_order;
    } catch (const std::exception&) {
    }
  }
  d << got.size() << " outputs, " << in_order << " in order; ";

  bool terminated = true;
  for (const char* id : {"walk-1", "walk-2"}) {
    const auto r = netfix::rpc(c1.control_endpoint(), bus::msg::kTaskTerminate, {{"task_id", id}});
    terminated = terminated && r.msg_type == std::string(bus::kAck);
  }
  const bool restored = netfix::eventually([&] { return reserved_matches(members_of(c1), baseline); }, 5000);
  int active = 0;
  for (auto* n : {&c1, &p1, &p2}) {
    for (const auto& rec : n->runtime().list()) active += is_active(rec.status) ? 1 : 0;
  }
  d << "reserved while running " << (reserved_while_running ? "yes" : "no") << ", terminate " << (terminated ? "acked" : "refused") << ", bookkeeping " << (restored ? "at" : "off")
    << " baseline, " << active << " active instances; ";

  p2.stop();
  p1.stop();
  c1.stop();
  const double secs = seconds_since(t0);
  d << secs << " s";
  const bool ok = reserved_while_running && arrived && got.size() == static_cast<std::size_t>(kPipelineItems) && in_order == kPipelineItems &&
                  terminated && restored && active == 0 &&
                  secs < std::chrono::duration<double>(kWalkthroughBudget).count();
  return {ok, d.str()};
}

// A schema-valid payload for every shipped message type.
std::map<std::string, Json> sample_payloads() {
  using fixtures::task;
  const Json node_record = fixtures::node("n1", kBox);
  const TaskSpec t = task("t1", "op");
  const AllocationScheme scheme{{{"t1", NodeId("n1"), "cpu", {}}}};
  const auto dep = fixtures::option("cpu", {500, kGiB, kGiB, 0});
  std::map<std::string, Json> m;
  m["cell.query"] = Json::object();
  m["cell.info"] = {{"coordinator", "c1"}, {"cell_size", 1}};
  m["cell.join"] = {{"node", node_record}};
  m["cell.leave"] = {{"node", "n1"}};
  m["cell.transfer"] = {{"primary", "p1"}, {"dest_coordinator", "c2"}};
  m["node.announce"] = {{"coordinator", "c1"}};
  m["instance.status"] = Json::object();
  m["instance.deploy"] = {{"task", Json(t)},
                          {"instance_id", "t1-00"},
                          {"model", {{"model_name", "model"}, {"engine_kind", "primitive"}}},
                          {"deployment", to_json(dep)}};
  m["instance.stop"] = {{"task_id", "t1"}};
  m["task.submit"] = {{"pipeline", TaskPipeline{{t}}}};
  m["task.plan"] = {{"pipeline", TaskPipeline{{t}}}, {"scheme", scheme}, {"score", 0.0}};
  m["task.terminate"] = {{"task_id", "t1"}};
  m["ack"] = Json::object();
  m["error.rejected"] = {{"reason_code", "Probe"}, {"detail", ""}};
  return m;
}

Verdict dispatch_precedence() {
  const auto& vocab = bus::Vocabulary::standard();
  const auto samples = sample_payloads();
  for (const auto& type : vocab.types()) {
    if (!samples.contains(type)) return {false, "no sample for " + type};
    try {
      vocab.validate_payload(type, samples.at(type));
    } catch (const Error& e) {
      return {false, "sample for " + type + " is invalid: " + e.detail()};
    }
  }

  std::mt19937_64 rng(0xce11);
  int trials = 0, dispatches = 0, wrong = 0;
  std::string first_wrong;
  for (; trials < 1000; ++trials) {
    bus::HandlerRegistry reg;
    std::map<std::string, std::string> expected;
    for (const auto& type : vocab.types()) {
      const bool pipe = rng() & 1;
      const bool ded = rng() & 1;
      auto tag = [type](std::string via) {
        return bus::make_handler(type, "ack",
                                 [via](const bus::Message& m) { return bus::make_ack(m.msg_id, {{"via", via}}); });
      };
      const int stages = 1 + static_cast<int>(rng() % 3);
      auto register_pipeline = [&] {
        // Only the first stage takes the request type; the rest take acks.
        std::vector<bus::Handler> chain{tag("pipeline")};
        for (int k = 1; k < stages; ++k) {
          chain.push_back(bus::make_handler("ack", "ack", [](const bus::Message& m) {
            return bus::make_ack(m.msg_id, {{"via", "pipeline"}});
          }));
        }
        reg.register_pipeline(type, std::move(chain));
      };
      if (rng() & 1) {
        if (ded) reg.register_handler(type, tag("dedicated"));
        if (pipe) register_pipeline();
      } else {
        if (pipe) register_pipeline();
        if (ded) reg.register_handler(type, tag("dedicated"));
      }
      expected[type] = pipe ? "pipeline" : ded ? "dedicated" : "NoHandler";
    }
    reg.seal();
    for (const auto& type : vocab.types()) {
      const auto req = bus::make_request(type, samples.at(type));
      std::optional<bus::Message> resp;
      reg.dispatch(req, [&](bus::Message r) { resp = std::move(r); });
      ++dispatches;
      std::string seen = "none";
      if (resp && resp->msg_id == req.msg_id) {
        seen = resp->is_rejection() ? resp->payload.value("reason_code", "?") : resp->payload.value("via", "?");
      }
      if (seen != expected[type]) {
        if (++wrong == 1) first_wrong = "; first: " + type + " expected " + expected[type] + " got " + seen;
      }
    }
  }
  std::ostringstream d;
  d << trials << " registries x " << vocab.types().size() << " types, " << dispatches << " dispatches, " << wrong
    << " out of order" << first_wrong;
  return {wrong == 0, d.str()};
}

Verdict message_counts() {
  sim::Simulation s(sim::SimConfig{});
  s.add_node({.id = "c1", .role = NodeRole::kCoordinator});
  for (int i = 1; i <= 5; ++i) s.add_node({.id = "p" + std::to_string(i)});
  s.start("c1");
  s.run_for(2500);
  for (int i = 1; i <= 5; ++i) s.start("p" + std::to_string(i));
  s.run_for(20000);
  if (s.node("c1").registry()->size() != 6) return {false, "cell did not reach six members"};
  s.reset_counts();
  constexpr std::int64_t window = 600000;
  s.run_for(window);
  const node::Timing t;
  const std::uint64_t presence = window / t.presence_interval_ms;
  const std::uint64_t pings = window / t.ping_interval_ms;
  const std::uint64_t syncs = window / t.sync_interval_ms;
  const std::uint64_t want_primary = presence + 2 * (pings + syncs);
  const std::uint64_t want_coordinator = presence + 5 * 2 * (pings + syncs);
  bool ok = s.counts("c1").total() == want_coordinator;
  std::uint64_t min_primary = UINT64_MAX;
  for (int i = 1; i <= 5; ++i) {
    const auto n = s.counts("p" + std::to_string(i)).total();
    ok = ok && n == want_primary;
    min_primary = std::min(min_primary, n);
  }
  ok = ok && s.counts("c1").total() <= 5 * min_primary;
  std::ostringstream d;
  d << "coordinator " << s.counts("c1").total() << " (expect " << want_coordinator << "), primary min "
    << min_primary << " (expect " << want_primary << "), ratio "
    << static_cast<double>(s.counts("c1").total()) / static_cast<double>(min_primary);
  return {ok, d.str()};
}

}  // namespace

// An optional argument restricts the run to criteria whose name contains it.
int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"scheduler-oracle-equivalence", oracle_equivalence},
      {"constraint-soundness", constraint_soundness},
      {"hyperparameter-defaults", hyperparameters},
      {"uniform-scaling-invariance", uniform_scaling},
      {"size-balanced-formation", size_balance},
      {"membership-safety", membership_safety},
      {"image-cache-reuse", image_cache_reuse},
      {"end-to-end-walkthrough", walkthrough},
      {"dispatch-precedence", dispatch_precedence},
      {"steady-state-message-counts", message_counts},
  };
  int failed = 0, ran = 0;
  for (const auto& [name, check] : criteria) {
    if (name.find(only) == std::string::npos) continue;
    ++ran;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << name << "  " << v.detail << std::endl;
  }
  std::cout << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
  fs::remove_all(fs::temp_directory_path() / ("cellkit-acceptance-" + std::to_string(::getpid())));
  return failed;
}
