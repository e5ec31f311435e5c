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
#include <functional>
#include <memory>
#include <mutex>
#include <stop_token>
#include <thread>

#include "cellkit/engine/binding.hpp"
#include "cellkit/engine/executor.hpp"
#include "cellkit/engine/protocol.hpp"

namespace cellkit::engine {

struct LoopOptions {
  // Consecutive process() failures after which the instance is failed.
  int failure_threshold = 5;
  std::chrono::milliseconds poll{50};
  std::chrono::milliseconds backoff_initial{10};
  std::chrono::milliseconds backoff_max{500};
};

struct LoopStats {
  std::uint64_t ingested = 0;
  std::uint64_t processed = 0;
  std::uint64_t published = 0;
  std::uint64_t failures = 0;
  int consecutive_failures = 0;
  std::uint64_t input_errors = 0;
  std::uint64_t publish_retries = 0;
  InstanceStatus status = InstanceStatus::kRunning;
  std::string last_error;
};

// Pull-based input -> process -> output loop on its own thread. An item is
// not ingested until the previous result has been published.
class PrimitiveInstance {
 public:
  // Resolves executor and protocols up front: throws kUnknownExecutor or
  // kUnknownProtocol without starting anything.
  PrimitiveInstance(const EngineBinding& binding, const ExecutorRegistry& executors,
                    const ProtocolRegistry& protocols, LoopOptions options = {});
  // Same, with handlers supplied directly.
  PrimitiveInstance(std::unique_ptr<Executor> executor, std::unique_ptr<InputHandler> input,
                    std::unique_ptr<OutputHandler> output, LoopOptions options = {});
  ~PrimitiveInstance();

  PrimitiveInstance(const PrimitiveInstance&) = delete;
  PrimitiveInstance& operator=(const PrimitiveInstance&) = delete;

  // Idempotent. Returns once the loop has exited and release() has run.
  void stop();

  LoopStats stats() const;
  InstanceStatus status() const { return stats().status; }

  // Blocks until pred(stats) holds or the timeout passes.
  bool wait_until(const std::function<bool(const LoopStats&)>& pred, std::chrono::milliseconds timeout) const;

 private:
  void start();
  void run(std::stop_token st);
  void nap(std::stop_token& st, std::chrono::milliseconds d);
  template <class F>
  void update(F&& f);

  std::unique_ptr<Executor> executor_;
  std::unique_ptr<InputHandler> input_;
  std::unique_ptr<OutputHandler> output_;
  LoopOptions options_;

  mutable std::mutex mu_;
  mutable std::condition_variable_any cv_;
  LoopStats stats_;
  std::jthread thread_;
};

}  // namespace cellkit::engine
