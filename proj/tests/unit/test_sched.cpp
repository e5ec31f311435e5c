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

#include <doctest.h>

#include <set>

#include "../support/fixtures.hpp"
#include "../support/scheduler_oracle.hpp"
#include "cellkit/core/error.hpp"
#include "cellkit/sched/scheduler.hpp"

using namespace cellkit;
using namespace cellkit::sched;
using namespace fixtures;

namespace {

const ResourceVector kBox{4000, 8 * kGiB, 8 * kGiB, 0};

Error error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorCode::kInternal, "");
}

NodeRecord gpu_node(std::string id, std::int64_t gpu_mem, int gpus = 1) {
  auto n = node(std::move(id), kBox);
  for (int g = 0; g < gpus; ++g) n.gpu.gpus.push_back({"gpu" + std::to_string(g), gpu_mem, 0});
  return n;
}

NodeRecord um_node(std::string id, ResourceVector capacity) {
  auto n = node(std::move(id), capacity);
  n.gpu.unified_memory = true;
  return n;
}

std::set<std::string> scheme_keys(const std::vector<AllocationScheme>& schemes) {
  std::set<std::string> out;
  for (const auto& s : schemes) out.insert(nlohmann::json(s).dump());
  return out;
}

}  // namespace

TEST_CASE("compatible") {
  const auto cpu_only = option("cpu", {1000, kGiB, kGiB, 0});
  CHECK(compatible(cpu_only, node("a", kBox)));
  CHECK_FALSE(compatible(cpu_only, node("a", kBox, {}, "arm64")));
  CHECK_FALSE(compatible(cpu_only, node("a", kBox, {3500, 0, 0, 0})));

  const auto gpu = option("gpu", {1000, kGiB, kGiB, 2 * kGiB});
  CHECK_FALSE(compatible(gpu, node("plain", kBox)));
  CHECK(compatible(gpu, gpu_node("g", 4 * kGiB)));
  CHECK_FALSE(compatible(gpu, gpu_node("g", kGiB)));

  // 2 GiB mem + 2 GiB gmem against 3 GiB of shared pool.
  const auto um_request = option("gpu", {1000, 2 * kGiB, 0, 2 * kGiB});
  CHECK_FALSE(compatible(um_request, um_node("j", {4000, 3 * kGiB, 8 * kGiB, 0})));
  CHECK(compatible(um_request, um_node("j", {4000, 4 * kGiB, 8 * kGiB, 0})));
}

TEST_CASE("resource_fraction follows pipeline-order reservations") {
  const auto n = node("a", {4000, 8 * kGiB, 8 * kGiB, 0});
  const PlacedRequest first{{2000, 0, 0, 0}, false, {}};
  CHECK(resource_fraction(n, {}, first, Resource::kCpu) == 0.5);

  const PlacedRequest second{{1000, 0, 0, 0}, false, {}};
  const std::vector<PlacedRequest> earlier{first};
  // 1000 / (4000 - 0 - 2000)
  CHECK(resource_fraction(n, earlier, second, Resource::kCpu) == 0.5);

  // Unified pool of 8 GiB; each side sees the pool minus the other's demand.
  const auto j = um_node("j", {4000, 8 * kGiB, 8 * kGiB, 0});
  const PlacedRequest um{{1000, 2 * kGiB, 0, 2 * kGiB}, true, {}};
  CHECK(resource_fraction(j, {}, um, Resource::kMem) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(resource_fraction(j, {}, um, Resource::kGmem) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const PlacedRequest zero{{0, 0, 0, 0}, false, {}};
  CHECK(resource_fraction(n, {}, zero, Resource::kDisk) == 0.0);

  const PlacedRequest huge{{8000, 0, 0, 0}, false, {}};
  const std::vector<PlacedRequest> full{PlacedRequest{{4000, 0, 0, 0}, false, {}}};
  CHECK(error_of([&] { resource_fraction(n, full, huge, Resource::kCpu); }).code() ==
        ErrorCode::kExhaustedResource);
}

TEST_CASE("enumerate_schemes yields the pruned Cartesian product") {
  SUBCASE("single candidate") {
    SkillLibrary lib{skill("op", {option("cpu", {100, kGiB, 0, 0})})};
    TaskPipeline p{{task("t1", "op")}};
    CHECK(enumerate_schemes(p, {node("a", kBox)}, lib).size() == 1);
  }
  SUBCASE("product cardinality 2 x 3") {
    auto wide = option("cpu", {100, kGiB, 0, 0});
    wide.supported_archs = {"amd64", "arm64"};
    SkillLibrary lib{skill("op1", {option("cpu", {100, kGiB, 0, 0})}), skill("op2", {wide})};
    std::vector<NodeRecord> nodes{node("a", kBox), node("b", kBox), node("c", kBox, {}, "arm64")};
    TaskPipeline p{{task("t1", "op1"), task("t2", "op2")}};
    SchedulingProblem problem(p, nodes, lib);
    REQUIRE(problem.candidates()[0].size() == 2);
    REQUIRE(problem.candidates()[1].size() == 3);
    CHECK(problem.product_size() == 6);
    CHECK(enumerate_schemes(p, nodes, lib).size() == 6);
  }
  SUBCASE("cumulative constraint empties the product") {
    SkillLibrary lib{skill("op", {option("cpu", {3000, kGiB, 0, 0})})};
    TaskPipeline p{{task("t1", "op"), task("t2", "op")}};
    std::vector<NodeRecord> nodes{node("x", kBox)};
    CHECK(enumerate_schemes(p, nodes, lib).empty());
    const auto e = error_of([&] { select_allocation(p, nodes, lib); });
    CHECK(e.code() == ErrorCode::kNoFeasibleAllocation);
    CHECK(e.context()["cause"] == "ConstraintExhaustion");
  }
  SUBCASE("discrete GPUs expand into per-GPU candidates") {
    SkillLibrary lib{skill("op", {option("gpu", {100, kGiB, 0, kGiB})})};
    TaskPipeline p{{task("t1", "op")}};
    const auto schemes = enumerate_schemes(p, {gpu_node("g", 4 * kGiB, 2)}, lib);
    REQUIRE(schemes.size() == 2);
    CHECK(schemes[0].assignments[0].gpu_id == "gpu0");
    CHECK(schemes[1].assignments[0].gpu_id == "gpu1");
  }
}

TEST_CASE("score_scheme") {
  SUBCASE("equal fractions on a single node score zero") {
    SkillLibrary lib{skill("op", {option("cpu", {2000, 4 * kGiB, 4 * kGiB, 0})})};
    TaskPipeline p{{task("t1", "op")}};
    const auto s = select_allocation(p, {node("a", kBox)}, lib);
    CHECK(s.total == 0.0);
    CHECK(s.fraction_variance_term == 0.0);
    CHECK(s.load_variance_term == 0.0);
    for (const auto& [r, f] : s.allocations.at(0).fractions) CHECK(f == 0.5);
  }
  SUBCASE("a GPU allocation with equal fractions scores beta") {
    SkillLibrary lib{skill("op", {option("gpu", {1000, 2 * kGiB, 2 * kGiB, 2 * kGiB})})};
    TaskPipeline p{{task("t1", "op")}};
    const auto s = select_allocation(p, {gpu_node("g", 8 * kGiB)}, lib);
    CHECK(s.total == -0.01);
    CHECK(s.allocations.at(0).gpu_id == "gpu0");
    CHECK(s.allocations.at(0).fractions.size() == 4);
  }
  SUBCASE("spreading two tasks beats stacking them") {
    SkillLibrary lib{skill("op", {option("cpu", {2000, 2 * kGiB, 2 * kGiB, 0})})};
    TaskPipeline p{{task("t1", "op"), task("t2", "op")}};
    std::vector<NodeRecord> nodes{node("a", kBox), node("b", kBox)};
    const AllocationScheme spread{{{"t1", NodeId("a"), "cpu", {}}, {"t2", NodeId("b"), "cpu", {}}}};
    const AllocationScheme stacked{{{"t1", NodeId("a"), "cpu", {}}, {"t2", NodeId("a"), "cpu", {}}}};
    const auto s_spread = score_scheme(spread, p, nodes, lib);
    const auto s_stacked = score_scheme(stacked, p, nodes, lib);
    // Hand evaluation: f = (1/2, 1/4, 1/4) for each spread allocation; the
    // second stacked allocation sees (1, 1/3, 1/3).
    CHECK(s_spread.total == doctest::Approx(1.0 / 72.0).epsilon(1e-14));
    CHECK(s_stacked.total == doctest::Approx(657.0 / 11664.0).epsilon(1e-14));
    CHECK(s_spread.total <= s_stacked.total);

    const auto ref = oracle::solve(p, nodes, lib);
    REQUIRE(ref.feasible);
    for (const auto& [scheme, total] : ref.all) {
      CHECK(score_scheme(scheme, p, nodes, lib).total == doctest::Approx(total).epsilon(1e-12));
    }
    const auto best = select_allocation(p, nodes, lib);
    CHECK(best.scheme == spread);
    CHECK(best.scheme == ref.best);
  }
  SUBCASE("load variance is weighted by alpha") {
    SkillLibrary lib{skill("small", {option("cpu", {1000, 2 * kGiB, 2 * kGiB, 0})}),
                     skill("large", {option("cpu", {2000, 4 * kGiB, 4 * kGiB, 0})})};
    TaskPipeline p{{task("t1", "small"), task("t2", "large")}};
    std::vector<NodeRecord> nodes{node("a", kBox), node("b", kBox)};
    const AllocationScheme split{{{"t1", NodeId("a"), "cpu", {}}, {"t2", NodeId("b"), "cpu", {}}}};
    const AllocationScheme packed{{{"t1", NodeId("a"), "cpu", {}}, {"t2", NodeId("a"), "cpu", {}}}};
    const auto a = score_scheme(split, p, nodes, lib);
    const auto b = score_scheme(packed, p, nodes, lib);
    // l_a = 1/4, l_b = 1/2: variance 1/64; packed has a single hosting node.
    CHECK(a.load_variance_term == 1.0 / 64.0);
    CHECK(b.load_variance_term == 0.0);
    CHECK(std::abs((a.total - b.total) - 0.1 / 64.0) <= 1e-12);
  }
  SUBCASE("constraint-violating schemes are rejected") {
    SkillLibrary lib{skill("op", {option("cpu", {3000, kGiB, 0, 0})})};
    TaskPipeline p{{task("t1", "op"), task("t2", "op")}};
    const AllocationScheme both{{{"t1", NodeId("x"), "cpu", {}}, {"t2", NodeId("x"), "cpu", {}}}};
    CHECK(error_of([&] { score_scheme(both, p, {node("x", kBox)}, lib); }).code() == ErrorCode::kInvalidArgument);
  }
}

TEST_CASE("select_allocation") {
  SUBCASE("unique scheme") {
    SkillLibrary lib{skill("op", {option("cpu", {100, kGiB, 0, 0})})};
    TaskPipeline p{{task("t1", "op")}};
    const auto s = select_allocation(p, {node("a", kBox)}, lib);
    REQUIRE(s.scheme.assignments.size() == 1);
    CHECK(s.scheme.assignments[0].node == NodeId("a"));
    CHECK(s.scheme.assignments[0].deployment_id == "cpu");
  }
  SUBCASE("GPU-only deployment without GPUs") {
    SkillLibrary lib{skill("op", {option("gpu", {100, kGiB, 0, kGiB})})};
    TaskPipeline p{{task("t1", "op")}};
    const auto e = error_of([&] { select_allocation(p, {node("a", kBox), node("b", kBox)}, lib); });
    CHECK(e.code() == ErrorCode::kNoFeasibleAllocation);
    CHECK(e.context()["cause"] == "NoCandidates");
    CHECK(e.context()["task_id"] == "t1");
    CHECK(error_of([&] { enumerate_schemes(p, {node("a", kBox)}, lib); }).code() == ErrorCode::kNoCandidates);
  }
  SUBCASE("exact ties resolve to the lexicographically smallest scheme") {
    SkillLibrary lib{skill("op", {option("cpu", {1000, kGiB, kGiB, 0})})};
    TaskPipeline p{{task("t1", "op")}};
    const auto s = select_allocation(p, {node("zeta", kBox), node("alpha", kBox), node("mid", kBox)}, lib);
    CHECK(s.scheme.assignments[0].node == NodeId("alpha"));
  }
  SUBCASE("search space guard") {
    SkillLibrary lib{skill("op", {option("cpu", {1, 1, 0, 0})})};
    TaskPipeline p{{task("t1", "op"), task("t2", "op"), task("t3", "op")}};
    std::vector<NodeRecord> nodes;
    for (int v = 0; v < 10; ++v) nodes.push_back(node("n" + std::to_string(v), kBox));
    SchedulerConfig cfg;
    cfg.max_schemes = 999;
    CHECK(error_of([&] { select_allocation(p, nodes, lib, cfg); }).code() == ErrorCode::kSearchSpaceExceeded);
    cfg.max_schemes = 1000;
    CHECK_NOTHROW(select_allocation(p, nodes, lib, cfg));
  }
  SUBCASE("deployment preference restricts the choice") {
    SkillLibrary lib{skill("op", {option("cpu", {1000, kGiB, kGiB, 0}), option("gpu", {1000, kGiB, kGiB, kGiB})})};
    TaskPipeline p{{task("t1", "op", "model", "cpu")}};
    const auto s = select_allocation(p, {gpu_node("g", 8 * kGiB)}, lib);
    CHECK(s.scheme.assignments[0].deployment_id == "cpu");
    CHECK_FALSE(s.scheme.assignments[0].gpu_id.has_value());
  }
}

TEST_CASE("oracle agreement on random instances") {
  int feasible = 0;
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    const auto inst = oracle::random_instance(seed);
    const auto ref = oracle::solve(inst.pipeline, inst.nodes, inst.library);
    if (!ref.feasible) {
      CHECK_THROWS_AS(select_allocation(inst.pipeline, inst.nodes, inst.library), Error);
      continue;
    }
    ++feasible;
    const auto got = select_allocation(inst.pipeline, inst.nodes, inst.library);
    CHECK(std::abs(got.total - ref.best_total) <= 1e-9);
    CHECK(got.scheme == ref.best);

    // Pruned enumeration equals the filtered full product.
    std::vector<AllocationScheme> from_oracle;
    for (const auto& [s, t] : ref.all) from_oracle.push_back(s);
    CHECK(scheme_keys(enumerate_schemes(inst.pipeline, inst.nodes, inst.library)) == scheme_keys(from_oracle));
    CHECK(enumerate_schemes(inst.pipeline, inst.nodes, inst.library).size() == ref.feasible_count);
  }
  CHECK(feasible > 100);
}

TEST_CASE("uniform scaling leaves scores unchanged") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto inst = oracle::random_instance(seed);
    const auto ref = oracle::solve(inst.pipeline, inst.nodes, inst.library);
    if (!ref.feasible) continue;
    const auto base = select_allocation(inst.pipeline, inst.nodes, inst.library);
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
      for (auto& d : lib) {
        for (auto& o : d.models[0].deployments) o.request = o.request.scaled(k);
      }
      const auto scaled = select_allocation(inst.pipeline, nodes, lib);
      CHECK(std::abs(scaled.total - base.total) <= 1e-9);
      CHECK(scaled.scheme == base.scheme);
    }
  }
}

TEST_CASE("GPU bonus lowers the total by |beta|/n") {
  SkillLibrary lib{skill("op", {option("cpu", {1000, 2 * kGiB, 2 * kGiB, 0}),
                                option("gpu", {1000, 2 * kGiB, 2 * kGiB, 2 * kGiB})}),
                   skill("other", {option("cpu", {1000, 2 * kGiB, 2 * kGiB, 0})})};
  TaskPipeline p{{task("t1", "op"), task("t2", "other")}};
  std::vector<NodeRecord> nodes{gpu_node("g", 8 * kGiB), node("h", kBox)};
  const AllocationScheme cpu{{{"t1", NodeId("g"), "cpu", {}}, {"t2", NodeId("h"), "cpu", {}}}};
  const AllocationScheme gpu{{{"t1", NodeId("g"), "gpu", "gpu0"}, {"t2", NodeId("h"), "cpu", {}}}};
  const auto a = score_scheme(cpu, p, nodes, lib);
  const auto b = score_scheme(gpu, p, nodes, lib);
  CHECK(b.total - a.total == SchedulerConfig{}.beta_gpu / 2.0);
  CHECK(select_allocation(p, nodes, lib).scheme == oracle::solve(p, nodes, lib).best);
}

TEST_CASE("repeated selection is deterministic") {
  for (std::uint64_t seed = 500; seed < 520; ++seed) {
    const auto inst = oracle::random_instance(seed);
    try {
      const auto a = select_allocation(inst.pipeline, inst.nodes, inst.library);
      auto shuffled = inst.nodes;
      std::reverse(shuffled.begin(), shuffled.end());
      const auto b = select_allocation(inst.pipeline, shuffled, inst.library);
      CHECK(a.scheme == b.scheme);
      CHECK(a.total == b.total);
    } catch (const Error&) {
    }
  }
}
