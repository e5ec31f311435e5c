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
#include <string>
#include <vector>

#include <json.hpp>

namespace cellkit {

// cpu in millicores; mem, disk and gmem in bytes.
struct ResourceVector {
  std::int64_t cpu = 0;
  std::int64_t mem = 0;
  std::int64_t disk = 0;
  std::int64_t gmem = 0;

  bool operator==(const ResourceVector&) const = default;

  ResourceVector& operator+=(const ResourceVector& o);
  // Asserts the result stays non-negative; bookkeeping never goes below zero.
  ResourceVector& operator-=(const ResourceVector& o);

  bool non_negative() const noexcept {
    return cpu >= 0 && mem >= 0 && disk >= 0 && gmem >= 0;
  }
  // Componentwise <=.
  bool fits_within(const ResourceVector& limit) const noexcept {
    return cpu <= limit.cpu && mem <= limit.mem && disk <= limit.disk && gmem <= limit.gmem;
  }
  ResourceVector scaled(std::int64_t k) const noexcept {
    return {cpu * k, mem * k, disk * k, gmem * k};
  }
};

ResourceVector operator+(ResourceVector a, const ResourceVector& b);
ResourceVector operator-(ResourceVector a, const ResourceVector& b);

constexpr std::int64_t kKiB = 1024;
constexpr std::int64_t kMiB = 1024 * kKiB;
constexpr std::int64_t kGiB = 1024 * kMiB;

struct Gpu {
  std::string gpu_id;
  std::int64_t mem_capacity = 0;
  std::int64_t mem_used = 0;

  std::int64_t free() const noexcept { return mem_capacity - mem_used; }
  bool operator==(const Gpu&) const = default;
};

// With unified memory the node has no discrete GPUs and GPU demand is drawn
// from the node's mem pool.
struct GpuInventory {
  std::vector<Gpu> gpus;
  bool unified_memory = false;

  bool operator==(const GpuInventory&) const = default;

  bool has_discrete() const noexcept { return !unified_memory && !gpus.empty(); }
  const Gpu* find(const std::string& id) const;
  // Throws kInvalidArgument when the invariants do not hold.
  void validate() const;
};

void to_json(nlohmann::json& j, const ResourceVector& v);
void from_json(const nlohmann::json& j, ResourceVector& v);
void to_json(nlohmann::json& j, const Gpu& v);
void from_json(const nlohmann::json& j, Gpu& v);
void to_json(nlohmann::json& j, const GpuInventory& v);
void from_json(const nlohmann::json& j, GpuInventory& v);

}  // namespace cellkit
