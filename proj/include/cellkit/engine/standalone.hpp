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

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

#include "cellkit/core/types.hpp"
#include "cellkit/engine/process.hpp"

namespace cellkit::engine {

struct StandaloneOptions {
  // A nonzero exit inside this window counts as EarlyExit.
  std::chrono::milliseconds grace{300};
  std::chrono::milliseconds stop_timeout{2000};
  std::filesystem::path workdir;
  std::filesystem::path log_file;
};

// Wraps an existing program, unmodified, run through /bin/sh -c. Its
// parameters reach it only through the environment.
class StandaloneInstance {
 public:
  StandaloneInstance(std::string command, Params env, StandaloneOptions options = {});
  ~StandaloneInstance();

  // Throws kLaunchFailed, or kEarlyExit (status becomes failed).
  void start();
  void stop();

  InstanceStatus status() const;
  std::optional<int> exit_code() const;
  int pid() const { return child_ ? child_->pid() : -1; }

 private:
  std::string command_;
  Params env_;
  StandaloneOptions options_;
  std::unique_ptr<ChildProcess> child_;
  bool stopped_by_us_ = false;
  bool launch_failed_ = false;
};

}  // namespace cellkit::engine
