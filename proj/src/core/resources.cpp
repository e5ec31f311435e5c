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

#include "cellkit/core/resources.hpp"

#include <cassert>
#include <set>

#include "cellkit/core/error.hpp"

namespace cellkit {

ResourceVector& ResourceVector::operator+=(const ResourceVector& o) {
  cpu += o.cpu;
  mem += o.mem;
  disk += o.disk;
  gmem += o.gmem;
  return *this;
}

ResourceVector& ResourceVector::operator-=(const ResourceVector& o) {
  cpu -= o.cpu;
  mem -= o.mem;
  disk -= o.disk;
  gmem -= o.gmem;
  assert(non_negative() && "resource bookkeeping went negative");
  return *this;
}

ResourceVector operator+(ResourceVector a, const ResourceVector& b) { return a += b; }
ResourceVector operator-(ResourceVector a, const ResourceVector& b) { return a -= b; }

const Gpu* GpuInventory::find(const std::string& id) const {
  for (const auto& g : gpus) {
    if (g.gpu_id == id) return &g;
  }
  return nullptr;
}

void GpuInventory::validate() const {
  if (unified_memory && !gpus.empty()) {
    fail(ErrorCode::kInvalidArgument, "unified-memory node must not list discrete GPUs");
  }
  std::set<std::string> seen;
  for (const auto& g : gpus) {
    if (g.gpu_id.empty()) fail(ErrorCode::kInvalidArgument, "empty gpu_id");
    if (!seen.insert(g.gpu_id).second) {
      fail(ErrorCode::kInvalidArgument, "duplicate gpu_id '" + g.gpu_id + "'");
    }
    if (g.mem_used < 0 || g.mem_capacity < 0 || g.mem_used > g.mem_capacity) {
      fail(ErrorCode::kInvalidArgument, "gpu '" + g.gpu_id + "' usage exceeds capacity");
    }
  }
}

void to_json(nlohmann::json& j, const ResourceVector& v) {
  j = nlohmann::json{{"cpu", v.cpu}, {"mem", v.mem}, {"disk", v.disk}, {"gmem", v.gmem}};
}

void from_json(const nlohmann::json& j, ResourceVector& v) {
  v.cpu = j.value("cpu", std::int64_t{0});
  v.mem = j.value("mem", std::int64_t{0});
  v.disk = j.value("disk", std::int64_t{0});
  v.gmem = j.value("gmem", std::int64_t{0});
}

void to_json(nlohmann::json& j, const Gpu& v) {
  j = nlohmann::json{{"gpu_id", v.gpu_id}, {"mem_capacity", v.mem_capacity}, {"mem_used", v.mem_used}};
}

void from_json(const nlohmann::json& j, Gpu& v) {
  v.gpu_id = j.at("gpu_id").get<std::string>();
  v.mem_capacity = j.at("mem_capacity").get<std::int64_t>();
  v.mem_used = j.value("mem_used", std::int64_t{0});
}

void to_json(nlohmann::json& j, const GpuInventory& v) {
  j = nlohmann::json{{"gpus", v.gpus}, {"unified_memory", v.unified_memory}};
}

void from_json(const nlohmann::json& j, GpuInventory& v) {
  v.gpus = j.value("gpus", std::vector<Gpu>{});
  v.unified_memory = j.value("unified_memory", false);
}

}  // namespace cellkit
