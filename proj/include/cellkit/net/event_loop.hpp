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
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

namespace cellkit::net {

// One thread running posted closures and timers in order. Work posted after
// stop() is discarded.
class EventLoop {
 public:
  using Clock = std::chrono::steady_clock;

  EventLoop();
  ~EventLoop();
  EventLoop(const EventLoop&) = delete;
  EventLoop& operator=(const EventLoop&) = delete;

  // Milliseconds since the loop was created.
  std::int64_t now_ms() const;

  void post(std::function<void()> fn);
  std::uint64_t schedule(std::int64_t delay_ms, std::function<void()> fn);
  void cancel(std::uint64_t id);

  // Runs fn on the loop and waits for its result. Must not be called from
  // the loop thread.
  template <class F>
  auto call(F fn) -> std::invoke_result_t<F> {
    using R = std::invoke_result_t<F>;
    auto task = std::make_shared<std::packaged_task<R()>>(std::move(fn));
    auto result = task->get_future();
    post([task] { (*task)(); });
    return result.get();
  }

  bool on_loop_thread() const { return std::this_thread::get_id() == thread_.get_id(); }

  // Finishes the closure in progress, drops the rest and joins.
  void stop();

 private:
  void run();

  const Clock::time_point origin_ = Clock::now();
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> ready_;
  // (due, id) -> closure
  std::map<std::pair<Clock::time_point, std::uint64_t>, std::function<void()>> timers_;
  std::map<std::uint64_t, Clock::time_point> due_;
  std::uint64_t next_id_ = 1;
  bool stopping_ = false;
  std::thread thread_;
};

// Fixed set of threads draining one queue of blocking jobs.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t threads);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void submit(std::function<void()> job);
  // Lets running jobs finish, drops queued ones, joins.
  void stop();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> jobs_;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

}  // namespace cellkit::net
