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

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include "cellkit/deploy/image_cache.hpp"
#include "cellkit/engine/binding.hpp"
#include "cellkit/engine/process.hpp"

namespace cellkit::deploy {

struct LaunchRequest {
  std::string instance_id;
  std::string task_id;
  std::string image_id;
  ImageSpec image;
  // The full CELL_* environment.
  engine::Params env;
};

class RunningInstance {
 public:
  virtual ~RunningInstance() = default;
  virtual InstanceStatus status() const = 0;
  // Returns once the instance no longer holds resources.
  virtual void stop() = 0;
};

class ExecutionBackend {
 public:
  virtual ~ExecutionBackend() = default;
  virtual std::string name() const = 0;
  // Returns an image id. Throws kBuildFailed.
  virtual std::string build_image(const ImageSpec& spec, const std::string& key) = 0;
  // Throws kLaunchFailed or kEarlyExit.
  virtual std::unique_ptr<RunningInstance> launch(const LaunchRequest& request) = 0;
};

// The Dockerfile text generated for an image.
std::string render_imagefile(const ImageSpec& spec);

// Writes `KEY=value` lines, sorted by key.
std::string render_env_file(const engine::Params& env);

struct ProcessBackendOptions {
  std::filesystem::path root;
  // Host program for primitive images.
  std::filesystem::path engine_binary;
  std::chrono::milliseconds grace{300};
  std::chrono::milliseconds stop_timeout{2000};
};

// Reference backend: every instance is an OS process in its own working
// directory under <root>/instances/<instance_id>/ holding params.env and
// instance.log. Images are directories under <root>/images/<key>/.
class ProcessBackend final : public ExecutionBackend {
 public:
  explicit ProcessBackend(ProcessBackendOptions options);

  std::string name() const override { return "process"; }
  std::string build_image(const ImageSpec& spec, const std::string& key) override;
  std::unique_ptr<RunningInstance> launch(const LaunchRequest& request) override;

  std::filesystem::path instance_dir(const std::string& instance_id) const;

 private:
  ProcessBackendOptions options_;
};

// Shells out to a docker-compatible CLI. Not exercised by the test suite.
class ContainerBackend final : public ExecutionBackend {
 public:
  ContainerBackend(std::filesystem::path root, std::string runtime = "docker");

  std::string name() const override { return "container"; }
  std::string build_image(const ImageSpec& spec, const std::string& key) override;
  std::unique_ptr<RunningInstance> launch(const LaunchRequest& request) override;

 private:
  std::filesystem::path root_;
  std::string runtime_;
};

// In-memory backend for simulation and bookkeeping tests.
class FakeBackend final : public ExecutionBackend {
 public:
  std::string name() const override { return "fake"; }
  std::string build_image(const ImageSpec& spec, const std::string& key) override;
  std::unique_ptr<RunningInstance> launch(const LaunchRequest& request) override;

  // Launches whose task id is listed here fail with LaunchFailed.
  std::set<std::string> fail_tasks;
  // Builds whose base image is listed here fail with BuildFailed.
  std::set<std::string> fail_images;

  std::size_t running() const { return running_->load(); }
  std::map<std::string, engine::Params> launched() const;

 private:
  std::shared_ptr<std::atomic<std::size_t>> running_ = std::make_shared<std::atomic<std::size_t>>(0);
  mutable std::mutex mu_;
  std::map<std::string, engine::Params> launched_;
};

}  // namespace cellkit::deploy
