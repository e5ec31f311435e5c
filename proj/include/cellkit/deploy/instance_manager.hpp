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
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cellkit/core/descriptor.hpp"
#include "cellkit/core/types.hpp"
#include "cellkit/deploy/backend.hpp"
#include "cellkit/deploy/image_cache.hpp"

namespace cellkit::deploy {

struct DeployRequest {
  TaskSpec task;
  ImplementationModel model;
  DeploymentOption deployment;
  std::optional<std::string> gpu_id;
  std::string instance_id;
};

struct ManagerOptions {
  // How long stopped/failed records stay listed.
  std::int64_t retention_ms = 3600 * 1000;
  std::function<std::int64_t()> now_ms;
};

// The node-local instance registry. deploy() and stop_task() are expected
// to be called from the node's single deployment queue; list() may run
// concurrently with them.
class InstanceManager {
 public:
  InstanceManager(NodeId node, ExecutionBackend& backend, ImageCache& cache, ManagerOptions options = {});
  ~InstanceManager();

  // Resolves the image (build on miss, reuse on hit), then launches. On
  // failure the record stays listed as failed and the error propagates.
  // Deploying an instance id that is already active returns its record.
  InstanceRecord deploy(const DeployRequest& request);

  // Stops every active instance of the task and returns their records.
  std::vector<InstanceRecord> stop_task(const std::string& task_id);

  std::vector<InstanceRecord> list() const;
  std::optional<InstanceRecord> find(const std::string& instance_id) const;

  // Drops stopped/failed records older than the retention window.
  std::size_t collect_garbage();

  void stop_all();

  ImageCache& cache() noexcept { return cache_; }
  const NodeId& node() const noexcept { return node_; }

 private:
  struct Entry {
    InstanceRecord record;
    std::unique_ptr<RunningInstance> handle;
    std::int64_t ended_at_ms = 0;
  };

  void refresh(Entry& e) const;

  NodeId node_;
  ExecutionBackend& backend_;
  ImageCache& cache_;
  ManagerOptions options_;
  mutable std::mutex mu_;
  // Mutable so list() can fold in status changes observed from handles.
  mutable std::map<std::string, Entry> entries_;
};

// The binding the engine receives for a deployment.
engine::EngineBinding make_binding(const DeployRequest& request);

}  // namespace cellkit::deploy
