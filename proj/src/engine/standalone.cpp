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

#include "cellkit/engine/standalone.hpp"

#include "cellkit/core/error.hpp"

namespace cellkit::engine {

StandaloneInstance::StandaloneInstance(std::string command, Params env, StandaloneOptions options)
    : command_(std::move(command)), env_(std::move(env)), options_(std::move(options)) {}

StandaloneInstance::~StandaloneInstance() { stop(); }

void StandaloneInstance::start() {
  if (child_) fail(ErrorCode::kInvalidArgument, "instance already started");
  try {
    child_ = std::make_unique<ChildProcess>(
        SpawnOptions{{"/bin/sh", "-c", command_}, env_, options_.workdir, options_.log_file});
  } catch (const Error&) {
    launch_failed_ = true;
    throw;
  }
  if (child_->wait_for_exit(options_.grace)) {
    const int code = *child_->exit_status();
    if (code != 0) {
      fail(ErrorCode::kEarlyExit, "'" + command_ + "' exited with status " + std::to_string(code),
           {{"exit_code", code}});
    }
  }
}

void StandaloneInstance::stop() {
  if (!child_ || !child_->running()) return;
  stopped_by_us_ = true;
  child_->terminate(options_.stop_timeout);
}

InstanceStatus StandaloneInstance::status() const {
  if (launch_failed_) return InstanceStatus::kFailed;
  if (!child_) return InstanceStatus::kBuilding;
  auto code = child_->exit_status();
  if (!code) return InstanceStatus::kRunning;
  if (stopped_by_us_ || *code == 0) return InstanceStatus::kStopped;
  return InstanceStatus::kFailed;
}

std::optional<int> StandaloneInstance::exit_code() const {
  return child_ ? child_->exit_status() : std::nullopt;
}

}  // namespace cellkit::engine
