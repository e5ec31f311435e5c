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

#include "cellkit/sched/scheduler.hpp"

#include <algorithm>
#include <limits>
#include <tuple>

#include "cellkit/core/error.hpp"

namespace cellkit::sched {
namespace {

// Headroom of a node before any allocation of the scheme is placed.
struct Headroom {
  std::int64_t cpu = 0;
  std::int64_t mem = 0;  // the shared pool on unified-memory nodes
  std::int64_t disk = 0;
  bool unified = false;
  std::vector<std::int64_t> gpu;  // per discrete GPU
};

// Reservations made on one node by earlier allocations of the scheme.
struct Ledger {
  std::int64_t cpu = 0;
  std::int64_t mem = 0;
  std::int64_t disk = 0;
  std::int64_t pool = 0;  // mem + gmem, unified-memory nodes only
  std::vector<std::int64_t> gpu;
  int tasks = 0;
};

Headroom headroom_of(const NodeRecord& n) {
  Headroom h;
  h.cpu = n.capacity.cpu - n.usage.cpu;
  h.mem = n.capacity.mem - n.usage.mem;
  h.disk = n.capacity.disk - n.usage.disk;
  h.unified = n.gpu.unified_memory;
  if (!h.unified) {
    for (const auto& g : n.gpu.gpus) h.gpu.push_back(g.free());
  }
  return h;
}

double ratio(std::int64_t num, std::int64_t den, Resource r) {
  if (num == 0) return 0.0;
  if (den <= 0) {
    fail(ErrorCode::kExhaustedResource, std::string("no remaining ") + std::string(to_string(r)));
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

bool fits(const Headroom& h, const Ledger& l, const ResourceVector& req, bool gpu, int gpu_index) {
  if (l.cpu + req.cpu > h.cpu) return false;
  if (l.disk + req.disk > h.disk) return false;
  if (l.mem + req.mem > h.mem) return false;
  if (h.unified) {
    if (l.pool + req.mem + req.gmem > h.mem) return false;
  } else if (gpu) {
    if (gpu_index < 0) return false;
    if (l.gpu[gpu_index] + req.gmem > h.gpu[gpu_index]) return false;
  }
  return true;
}

void reserve(Ledger& l, const ResourceVector& req, bool unified, int gpu_index, int sign) {
  l.cpu += sign * req.cpu;
  l.mem += sign * req.mem;
  l.disk += sign * req.disk;
  if (unified) l.pool += sign * (req.mem + req.gmem);
  if (gpu_index >= 0) l.gpu[gpu_index] += sign * req.gmem;
  l.tasks += sign;
}

double fraction_of(const Headroom& h, const Ledger& l, const ResourceVector& req, bool gpu, int gpu_index,
                   Resource r) {
  switch (r) {
    case Resource::kCpu: return ratio(req.cpu, h.cpu - l.cpu, r);
    case Resource::kDisk: return ratio(req.disk, h.disk - l.disk, r);
    case Resource::kMem:
      if (h.unified) return ratio(req.mem, h.mem - l.pool - (gpu ? req.gmem : 0), r);
      return ratio(req.mem, h.mem - l.mem, r);
    case Resource::kGmem:
      if (!gpu) return 0.0;
      if (h.unified) return ratio(req.gmem, h.mem - l.pool - req.mem, r);
      if (gpu_index < 0) fail(ErrorCode::kExhaustedResource, "GPU allocation without a bound GPU");
      return ratio(req.gmem, h.gpu[gpu_index] - l.gpu[gpu_index], r);
  }
  return 0.0;
}

struct AllocationEval {
  double variance = 0.0;
  double beta = 0.0;
  std::array<double, 4> f{};
  int resources = 3;
};

AllocationEval evaluate(const Headroom& h, const Ledger& l, const ResourceVector& req, bool gpu, int gpu_index,
                        double beta_gpu) {
  AllocationEval e;
  e.resources = gpu ? 4 : 3;
  e.f[0] = fraction_of(h, l, req, gpu, gpu_index, Resource::kCpu);
  e.f[1] = fraction_of(h, l, req, gpu, gpu_index, Resource::kMem);
  e.f[2] = fraction_of(h, l, req, gpu, gpu_index, Resource::kDisk);
  if (gpu) e.f[3] = fraction_of(h, l, req, gpu, gpu_index, Resource::kGmem);
  double mean = 0.0;
  for (int k = 0; k < e.resources; ++k) mean += e.f[k];
  mean /= e.resources;
  double var = 0.0;
  for (int k = 0; k < e.resources; ++k) var += (e.f[k] - mean) * (e.f[k] - mean);
  e.variance = var / e.resources;
  e.beta = gpu ? beta_gpu : 0.0;
  return e;
}

double load_share(std::int64_t used, std::int64_t capacity) {
  if (capacity <= 0) return 0.0;
  return static_cast<double>(used) / static_cast<double>(capacity);
}

// Population variance of l_v over the nodes hosting at least one allocation;
// fills `loads` when given.
double load_variance(const std::vector<NodeRecord>& nodes, const std::vector<Ledger>& ledgers,
                     std::map<NodeId, double>* loads) {
  double sum = 0.0;
  double sum_sq_basis = 0.0;
  int count = 0;
  thread_local std::vector<double> values;
  values.clear();
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    if (ledgers[v].tasks == 0) continue;
    const auto& n = nodes[v];
    const double cpu = load_share(n.usage.cpu + ledgers[v].cpu, n.capacity.cpu);
    const double mem = load_share(n.usage.mem + ledgers[v].mem, n.capacity.mem);
    const double load = 0.5 * (cpu + mem);
    if (loads) (*loads)[n.id] = load;
    values.push_back(load);
    sum += load;
    ++count;
  }
  if (count == 0) return 0.0;
  const double mean = sum / count;
  for (double x : values) sum_sq_basis += (x - mean) * (x - mean);
  return sum_sq_basis / count;
}

constexpr std::array<Resource, 4> kResourceOrder{Resource::kCpu, Resource::kMem, Resource::kDisk, Resource::kGmem};

auto candidate_key(const AllocationCandidate& c) {
  return std::make_tuple(std::cref(c.node), std::cref(c.deployment.deployment_id), c.gpu_id.has_value(),
                         c.gpu_id ? std::string_view(*c.gpu_id) : std::string_view());
}

bool candidate_less(const AllocationCandidate& a, const AllocationCandidate& b) {
  return candidate_key(a) < candidate_key(b);
}

}  // namespace

std::string_view to_string(Resource r) {
  switch (r) {
    case Resource::kCpu: return "cpu";
    case Resource::kMem: return "mem";
    case Resource::kDisk: return "disk";
    case Resource::kGmem: return "gmem";
  }
  return "?";
}

bool compatible(const DeploymentOption& d, const NodeRecord& node) {
  if (!d.supported_archs.contains(node.arch)) return false;
  const auto h = headroom_of(node);
  if (d.request.cpu > h.cpu || d.request.mem > h.mem || d.request.disk > h.disk) return false;
  if (!d.requires_gpu) return true;
  if (node.gpu.unified_memory) return d.request.mem + d.request.gmem <= h.mem;
  return std::any_of(h.gpu.begin(), h.gpu.end(), [&](std::int64_t free) { return free >= d.request.gmem; });
}

double resource_fraction(const NodeRecord& node, std::span<const PlacedRequest> earlier_on_node,
                         const PlacedRequest& alloc, Resource r) {
  const auto h = headroom_of(node);
  Ledger l;
  l.gpu.assign(h.gpu.size(), 0);
  auto gpu_index_of = [&](const PlacedRequest& p) {
    if (!p.gpu_id || node.gpu.unified_memory) return -1;
    for (std::size_t g = 0; g < node.gpu.gpus.size(); ++g) {
      if (node.gpu.gpus[g].gpu_id == *p.gpu_id) return static_cast<int>(g);
    }
    fail(ErrorCode::kInvalidArgument, "node '" + node.id.value + "' has no GPU '" + *p.gpu_id + "'");
  };
  for (const auto& p : earlier_on_node) reserve(l, p.request, h.unified, gpu_index_of(p), +1);
  return fraction_of(h, l, alloc.request, alloc.requires_gpu, gpu_index_of(alloc), r);
}

SchedulingProblem::SchedulingProblem(const TaskPipeline& pipeline, std::vector<NodeRecord> nodes,
                                     const SkillLibrary& library, SchedulerConfig config)
    : pipeline_(pipeline), nodes_(std::move(nodes)), config_(config) {
  validate_pipeline(pipeline_);
  std::sort(nodes_.begin(), nodes_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t v = 1; v < nodes_.size(); ++v) {
    if (nodes_[v].id == nodes_[v - 1].id) {
      fail(ErrorCode::kInvalidArgument, "duplicate node '" + nodes_[v].id.value + "'");
    }
  }
  for (const auto& task : pipeline_.tasks) {
    std::vector<AllocationCandidate> set;
    for (const auto& d : resolve_deployments(library, task)) {
      for (std::size_t v = 0; v < nodes_.size(); ++v) {
        const auto& node = nodes_[v];
        if (!compatible(d, node)) continue;
        if (d.requires_gpu && node.gpu.has_discrete()) {
          for (std::size_t g = 0; g < node.gpu.gpus.size(); ++g) {
            if (node.gpu.gpus[g].free() < d.request.gmem) continue;
            set.push_back({task.task_id, v, node.id, d, node.gpu.gpus[g].gpu_id, static_cast<int>(g)});
          }
        } else {
          set.push_back({task.task_id, v, node.id, d, std::nullopt, -1});
        }
      }
    }
    std::sort(set.begin(), set.end(), candidate_less);
    candidates_.push_back(std::move(set));
  }
}

void SchedulingProblem::require_candidates() const {
  for (std::size_t i = 0; i < candidates_.size(); ++i) {
    if (candidates_[i].empty()) {
      const auto& id = pipeline_.tasks[i].task_id;
      fail(ErrorCode::kNoCandidates, "task '" + id + "' has no compatible (deployment, node) pair",
           nlohmann::json{{"task_id", id}});
    }
  }
}

std::uint64_t SchedulingProblem::product_size() const {
  std::uint64_t total = 1;
  for (const auto& c : candidates_) {
    if (c.empty()) return 0;
    if (total > std::numeric_limits<std::uint64_t>::max() / c.size()) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    total *= c.size();
  }
  return total;
}

std::uint64_t SchedulingProblem::enumerate(const SchemeVisitor& visit) const {
  const std::size_t n = candidates_.size();
  if (n == 0) return 0;
  std::vector<Headroom> heads;
  std::vector<Ledger> ledgers;
  for (const auto& node : nodes_) {
    heads.push_back(headroom_of(node));
    Ledger l;
    l.gpu.assign(heads.back().gpu.size(), 0);
    ledgers.push_back(std::move(l));
  }
  std::vector<const AllocationCandidate*> choice(n, nullptr);
  std::vector<double> per_alloc(n, 0.0);
  std::uint64_t visited = 0;
  bool stop = false;

  std::function<void(std::size_t)> descend = [&](std::size_t depth) {
    for (const auto& c : candidates_[depth]) {
      if (stop) return;
      const auto& h = heads[c.node_index];
      auto& l = ledgers[c.node_index];
      const auto& req = c.deployment.request;
      const bool gpu = c.deployment.requires_gpu;
      if (!fits(h, l, req, gpu, c.gpu_index)) continue;
      const auto e = evaluate(h, l, req, gpu, c.gpu_index, config_.beta_gpu);
      per_alloc[depth] = e.variance + e.beta;
      choice[depth] = &c;
      reserve(l, req, h.unified, c.gpu_index, +1);
      if (depth + 1 == n) {
        double frac = 0.0;
        for (double x : per_alloc) frac += x;
        frac /= static_cast<double>(n);
        const double total = frac + config_.alpha * load_variance(nodes_, ledgers, nullptr);
        ++visited;
        if (!visit(choice, total)) stop = true;
      } else {
        descend(depth + 1);
      }
      reserve(l, req, h.unified, c.gpu_index, -1);
    }
  };
  descend(0);
  return visited;
}

ScoredScheme SchedulingProblem::score(std::span<const AllocationCandidate* const> choice,
                                      bool with_breakdown) const {
  if (choice.size() != pipeline_.tasks.size()) {
    fail(ErrorCode::kInvalidArgument, "scheme length does not match the pipeline");
  }
  std::vector<Headroom> heads;
  std::vector<Ledger> ledgers;
  for (const auto& node : nodes_) {
    heads.push_back(headroom_of(node));
    Ledger l;
    l.gpu.assign(heads.back().gpu.size(), 0);
    ledgers.push_back(std::move(l));
  }
  ScoredScheme out;
  double frac = 0.0;
  for (std::size_t i = 0; i < choice.size(); ++i) {
    const auto& c = *choice[i];
    const auto& h = heads[c.node_index];
    auto& l = ledgers[c.node_index];
    const auto& req = c.deployment.request;
    const bool gpu = c.deployment.requires_gpu;
    if (!fits(h, l, req, gpu, c.gpu_index)) {
      fail(ErrorCode::kInvalidArgument,
           "task '" + c.task_id + "' exceeds remaining resources on node '" + c.node.value + "'");
    }
    const auto e = evaluate(h, l, req, gpu, c.gpu_index, config_.beta_gpu);
    frac += e.variance + e.beta;
    reserve(l, req, h.unified, c.gpu_index, +1);
    out.scheme.assignments.push_back({c.task_id, c.node, c.deployment.deployment_id, c.gpu_id});
    if (with_breakdown) {
      AllocationBreakdown b;
      b.task_id = c.task_id;
      b.node = c.node;
      b.deployment_id = c.deployment.deployment_id;
      b.gpu_id = c.gpu_id;
      b.requires_gpu = gpu;
      for (int k = 0; k < e.resources; ++k) b.fractions.emplace_back(kResourceOrder[k], e.f[k]);
      b.variance = e.variance;
      b.beta = e.beta;
      out.allocations.push_back(std::move(b));
    }
  }
  out.fraction_variance_term = frac / static_cast<double>(choice.size());
  out.load_variance_term = load_variance(nodes_, ledgers, with_breakdown ? &out.node_load : nullptr);
  out.total = out.fraction_variance_term + config_.alpha * out.load_variance_term;
  return out;
}

std::vector<AllocationScheme> enumerate_schemes(const TaskPipeline& pipeline, const std::vector<NodeRecord>& nodes,
                                                const SkillLibrary& library, const SchedulerConfig& config) {
  SchedulingProblem problem(pipeline, nodes, library, config);
  problem.require_candidates();
  if (problem.product_size() > config.max_schemes) {
    fail(ErrorCode::kSearchSpaceExceeded,
         "candidate product exceeds " + std::to_string(config.max_schemes) + " schemes");
  }
  std::vector<AllocationScheme> out;
  problem.enumerate([&](std::span<const AllocationCandidate* const> choice, double) {
    AllocationScheme s;
    for (const auto* c : choice) s.assignments.push_back({c->task_id, c->node, c->deployment.deployment_id, c->gpu_id});
    out.push_back(std::move(s));
    return true;
  });
  return out;
}

ScoredScheme score_scheme(const AllocationScheme& scheme, const TaskPipeline& pipeline,
                          const std::vector<NodeRecord>& nodes, const SkillLibrary& library,
                          const SchedulerConfig& config) {
  SchedulingProblem problem(pipeline, nodes, library, config);
  if (scheme.assignments.size() != pipeline.tasks.size()) {
    fail(ErrorCode::kInvalidArgument, "scheme must assign every task exactly once");
  }
  std::vector<const AllocationCandidate*> choice;
  for (std::size_t i = 0; i < scheme.assignments.size(); ++i) {
    const auto& a = scheme.assignments[i];
    if (a.task_id != pipeline.tasks[i].task_id) {
      fail(ErrorCode::kInvalidArgument, "assignment " + std::to_string(i) + " is for task '" + a.task_id +
                                            "', expected '" + pipeline.tasks[i].task_id + "'");
    }
    const AllocationCandidate* found = nullptr;
    for (const auto& c : problem.candidates()[i]) {
      if (c.node == a.node && c.deployment.deployment_id == a.deployment_id && c.gpu_id == a.gpu_id) {
        found = &c;
        break;
      }
    }
    if (found == nullptr) {
      fail(ErrorCode::kInvalidArgument, "assignment of task '" + a.task_id + "' to node '" + a.node.value +
                                            "' is not a compatible candidate");
    }
    choice.push_back(found);
  }
  return problem.score(choice);
}

ScoredScheme select_allocation(const TaskPipeline& pipeline, const std::vector<NodeRecord>& nodes,
                               const SkillLibrary& library, const SchedulerConfig& config) {
  SchedulingProblem problem(pipeline, nodes, library, config);
  try {
    problem.require_candidates();
  } catch (const Error& e) {
    nlohmann::json ctx = e.context();
    ctx["cause"] = "NoCandidates";
    fail(ErrorCode::kNoFeasibleAllocation, "NoCandidates: " + e.detail(), std::move(ctx));
  }
  if (problem.product_size() > config.max_schemes) {
    fail(ErrorCode::kSearchSpaceExceeded,
         "candidate product exceeds " + std::to_string(config.max_schemes) + " schemes");
  }

  // Pass 1: every feasible total in enumeration (= tie-break) order.
  std::vector<double> totals;
  problem.enumerate([&](std::span<const AllocationCandidate* const>, double total) {
    totals.push_back(total);
    return true;
  });
  if (totals.empty()) {
    fail(ErrorCode::kNoFeasibleAllocation,
         "ConstraintExhaustion: every scheme violates a cumulative resource constraint",
         nlohmann::json{{"cause", "ConstraintExhaustion"}});
  }
  const double best = *std::min_element(totals.begin(), totals.end());
  std::size_t winner = 0;
  while (totals[winner] > best + config.tie_epsilon) ++winner;

  // Pass 2: materialize the winning scheme.
  std::vector<const AllocationCandidate*> chosen;
  std::size_t index = 0;
  problem.enumerate([&](std::span<const AllocationCandidate* const> choice, double) {
    if (index++ < winner) return true;
    chosen.assign(choice.begin(), choice.end());
    return false;
  });
  return problem.score(chosen);
}

nlohmann::json to_json(const ScoredScheme& scored) {
  nlohmann::json allocs = nlohmann::json::array();
  for (const auto& a : scored.allocations) {
    nlohmann::json fr = nlohmann::json::object();
    for (const auto& [r, f] : a.fractions) fr[std::string(to_string(r))] = f;
    nlohmann::json j{{"task_id", a.task_id},
                     {"node", a.node},
                     {"deployment_id", a.deployment_id},
                     {"requires_gpu", a.requires_gpu},
                     {"fractions", fr},
                     {"variance", a.variance},
                     {"beta", a.beta}};
    if (a.gpu_id) j["gpu_id"] = *a.gpu_id;
    allocs.push_back(std::move(j));
  }
  nlohmann::json loads = nlohmann::json::object();
  for (const auto& [id, l] : scored.node_load) loads[id.value] = l;
  return nlohmann::json{{"scheme", scored.scheme},
                        {"fraction_variance_term", scored.fraction_variance_term},
                        {"load_variance_term", scored.load_variance_term},
                        {"total", scored.total},
                        {"allocations", allocs},
                        {"node_load", loads}};
}

}  // namespace cellkit::sched
