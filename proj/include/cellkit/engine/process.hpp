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
#include <condition_variable>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cellkit/engine/executor.hpp"

namespace cellkit::engine {

struct SpawnOptions {
  std::vector<std::string> argv;
  // Added on top of the parent's environment.
  Params env;
  std::filesystem::path cwd;
  // stdout and stderr are appended here; /dev/null when empty.
  std::filesystem::path log_file;
};

// A child process in its own process group, reaped by a watcher thread.
class ChildProcess {
 public:
  // Throws kLaunchFailed if the program cannot be executed.
  explicit ChildProcess(const SpawnOptions& options);
  ~ChildProcess();

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  int pid() const noexcept { return pid_; }
  bool running() const;
  // Exit code, or 128 + signal number; empty while running.
  std::optional<int> exit_status() const;

  bool wait_for_exit(std::chrono::milliseconds timeout) const;

  // SIGTERM to the group, SIGKILL after `grace`. Returns the exit status.
  int terminate(std::chrono::milliseconds grace);

 private:
  void watch();

  int pid_ = -1;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::optional<int> status_;
  std::thread watcher_;
};

}  // namespace cellkit::engine
