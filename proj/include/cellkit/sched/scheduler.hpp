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
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cellkit/core/descriptor.hpp"
#include "cellkit/core/types.hpp"

namespace cellkit::sched {

struct SchedulerConfig {
  double alpha = 0.1;        // weight of the cross-node load variance
  double beta_gpu = -0.01;   // added per allocation whose deployment requires a GPU
  std::uint64_t max_schemes = 1'000'000;
  // Schemes whose totals lie within this distance of the minimum count as
  // tied and fall back to the lexicographic order of their assignments.
  double tie_epsilon = 1e-12;
};

enum class Resource { kCpu, kMem, kDisk, kGmem };

std::string_view to_string(Resource r);

// Arch match plus static headroom on the node (before any other allocation
// of the same scheme is reserved).
bool compatible(const DeploymentOption& deployment, const NodeRecord& node);

struct AllocationCandidate {
  std::string task_id;
  std::size_t node_index = 0;  // into SchedulingProblem::nodes()
  NodeId node;
  DeploymentOption deployment;
  std::optional<std::string> gpu_id;
  int gpu_index = -1;  // into the node's GPU list when gpu_id is set
};

// One already-placed or to-be-placed allocation on a given node.
struct PlacedRequest {
  ResourceVector request;
  bool requires_gpu = false;
  std::optional<std::string> gpu_id;
};

// f_i^r for `alloc` on `node`, given the allocations placed before it on the
// same node in pipeline order. Zero requests yield 0. Throws
// kExhaustedResource when a positive request meets a non-positive
// denominator.
double resource_fraction(const NodeRecord& node, std::span<const PlacedRequest> earlier_on_node,
                         const PlacedRequest& alloc, Resource r);

struct AllocationBreakdown {
  std::string task_id;
  NodeId node;
  std::string deployment_id;
  std::optional<std::string> gpu_id;
  bool requires_gpu = false;
  std::vector<std::pair<Resource, double>> fractions;
  double variance = 0.0;  // population variance over the relevant resources
  double beta = 0.0;
};

struct ScoredScheme {
  AllocationScheme scheme;
  double fraction_variance_term = 0.0;  // includes the averaged beta terms
  double load_variance_term = 0.0;
  double total = 0.0;
  std::vector<AllocationBreakdown> allocations;
  std::map<NodeId, double> node_load;  // l_v for every node hosting a task
};

// Candidate sets and pruned enumeration for one (pipeline, cell) instance.
// Nodes are ordered by id; each candidate set is sorted by
// (node id, deployment id, gpu id) with "no gpu" first.
class SchedulingProblem {
 public:
  SchedulingProblem(const TaskPipeline& pipeline, std::vector<NodeRecord> nodes,
                    const SkillLibrary& library, SchedulerConfig config = {});

  const TaskPipeline& pipeline() const noexcept { return pipeline_; }
  const std::vector<NodeRecord>& nodes() const noexcept { return nodes_; }
  const SchedulerConfig& config() const noexcept { return config_; }
  const std::vector<std::vector<AllocationCandidate>>& candidates() const noexcept { return candidates_; }

  // Throws kNoCandidates naming the first task with an empty candidate set.
  void require_candidates() const;

  // |C_1| x ... x |C_n|, saturating at UINT64_MAX.
  std::uint64_t product_size() const;

  // Visits every scheme of the Cartesian product that satisfies the
  // cumulative resource constraints, depth-first in candidate order, with
  // each scheme's total score. The visitor returns false to stop early.
  // Returns the number of schemes visited.
  using SchemeVisitor = std::function<bool(std::span<const AllocationCandidate* const>, double total)>;
  std::uint64_t enumerate(const SchemeVisitor& visit) const;

  ScoredScheme score(std::span<const AllocationCandidate* const> choice, bool with_breakdown = true) const;

 private:
  TaskPipeline pipeline_;
  std::vector<NodeRecord> nodes_;
  SchedulerConfig config_;
  std::vector<std::vector<AllocationCandidate>> candidates_;
};

// Yields the pruned Cartesian product as concrete schemes.
std::vector<AllocationScheme> enumerate_schemes(const TaskPipeline& pipeline, const std::vector<NodeRecord>& nodes,
                                                const SkillLibrary& library, const SchedulerConfig& config = {});

// Scores an explicit scheme. Throws kInvalidArgument if the scheme does not
// match the pipeline or violates a resource constraint.
ScoredScheme score_scheme(const AllocationScheme& scheme, const TaskPipeline& pipeline,
                          const std::vector<NodeRecord>& nodes, const SkillLibrary& library,
                          const SchedulerConfig& config = {});

// The score-minimal feasible scheme. Throws kNoFeasibleAllocation (cause
// "NoCandidates" or "ConstraintExhaustion" in the error context) or
// kSearchSpaceExceeded.
ScoredScheme select_allocation(const TaskPipeline& pipeline, const std::vector<NodeRecord>& nodes,
                               const SkillLibrary& library, const SchedulerConfig& config = {});

nlohmann::json to_json(const ScoredScheme& scored);

}  // namespace cellkit::sched
