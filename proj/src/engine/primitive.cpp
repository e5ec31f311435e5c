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

#include "cellkit/engine/primitive.hpp"

#include <algorithm>

#include "cellkit/core/error.hpp"

namespace cellkit::engine {
namespace {

std::string describe(std::exception_ptr ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const Error& e) {
    return std::string(error_code_name(e.code())) + ": " + e.detail();
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown exception";
  }
}

}  // namespace

PrimitiveInstance::PrimitiveInstance(const EngineBinding& binding, const ExecutorRegistry& executors,
                                     const ProtocolRegistry& protocols, LoopOptions options)
    : options_(options) {
  if (binding.engine_kind != EngineKind::kPrimitive) {
    fail(ErrorCode::kInvalidArgument, "binding is not for the primitive engine");
  }
  const auto& in = protocols.find(binding.input.protocol_id);
  const auto& out = protocols.find(binding.output.protocol_id);
  if (!executors.contains(binding.executor_id)) {
    fail(ErrorCode::kUnknownExecutor, "no executor named '" + binding.executor_id + "'");
  }
  input_ = in.input(binding.input.address);
  output_ = out.output(binding.output.address);
  executor_ = executors.create(binding.executor_id, binding.params);
  start();
}

PrimitiveInstance::PrimitiveInstance(std::unique_ptr<Executor> executor, std::unique_ptr<InputHandler> input,
                                     std::unique_ptr<OutputHandler> output, LoopOptions options)
    : executor_(std::move(executor)), input_(std::move(input)), output_(std::move(output)), options_(options) {
  start();
}

PrimitiveInstance::~PrimitiveInstance() { stop(); }

void PrimitiveInstance::start() {
  thread_ = std::jthread([this](std::stop_token st) { run(st); });
}

void PrimitiveInstance::stop() {
  if (thread_.joinable()) {
    thread_.request_stop();
    cv_.notify_all();
    thread_.join();
  }
}

LoopStats PrimitiveInstance::stats() const {
  std::lock_guard lk(mu_);
  return stats_;
}

bool PrimitiveInstance::wait_until(const std::function<bool(const LoopStats&)>& pred,
                                   std::chrono::milliseconds timeout) const {
  std::unique_lock lk(mu_);
  return cv_.wait_for(lk, timeout, [&] { return pred(stats_); });
}

template <class F>
void PrimitiveInstance::update(F&& f) {
  {
    std::lock_guard lk(mu_);
    f(stats_);
  }
  cv_.notify_all();
}

void PrimitiveInstance::nap(std::stop_token& st, std::chrono::milliseconds d) {
  std::unique_lock lk(mu_);
  cv_.wait_for(lk, st, d, [] { return false; });
}

void PrimitiveInstance::run(std::stop_token st) {
  auto backoff = options_.backoff_initial;
  auto grow = [&] { backoff = std::min(backoff * 2, options_.backoff_max); };
  bool failed = false;

  while (!st.stop_requested() && !failed) {
    std::optional<Json> item;
    try {
      item = input_->next(options_.poll);
    } catch (...) {
      const auto why = describe(std::current_exception());
      update([&](LoopStats& s) {
        ++s.input_errors;
        s.last_error = why;
      });
      nap(st, backoff);
      grow();
      continue;
    }
    backoff = options_.backoff_initial;
    if (!item) continue;
    update([](LoopStats& s) { ++s.ingested; });

    Json result;
    try {
      result = executor_->process(*item);
    } catch (...) {
      const auto why = describe(std::current_exception());
      update([&](LoopStats& s) {
        ++s.failures;
        ++s.consecutive_failures;
        s.last_error = why;
        if (s.consecutive_failures >= options_.failure_threshold) failed = true;
      });
      continue;
    }
    update([](LoopStats& s) {
      ++s.processed;
      s.consecutive_failures = 0;
    });

    // Publish failures are retried until they succeed or the instance stops.
    for (;;) {
      try {
        output_->publish(result);
        update([](LoopStats& s) { ++s.published; });
        break;
      } catch (...) {
        const auto why = describe(std::current_exception());
        update([&](LoopStats& s) {
          ++s.publish_retries;
          s.last_error = why;
        });
        if (st.stop_requested()) break;
        nap(st, backoff);
        grow();
      }
    }
    backoff = options_.backoff_initial;
  }

  try {
    executor_->release();
  } catch (...) {
    const auto why = describe(std::current_exception());
    update([&](LoopStats& s) { s.last_error = "release: " + why; });
  }
  update([&](LoopStats& s) { s.status = failed ? InstanceStatus::kFailed : InstanceStatus::kStopped; });
}

}  // namespace cellkit::engine
