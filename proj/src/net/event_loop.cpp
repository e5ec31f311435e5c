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

#include "cellkit/net/event_loop.hpp"

namespace cellkit::net {

EventLoop::EventLoop() : thread_([this] { run(); }) {}

EventLoop::~EventLoop() { stop(); }

std::int64_t EventLoop::now_ms() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - origin_).count();
}

void EventLoop::post(std::function<void()> fn) {
  {
    std::lock_guard lk(mu_);
    if (stopping_) return;
    ready_.push_back(std::move(fn));
  }
  cv_.notify_one();
}

std::uint64_t EventLoop::schedule(std::int64_t delay_ms, std::function<void()> fn) {
  std::uint64_t id;
  {
    std::lock_guard lk(mu_);
    id = next_id_++;
    if (stopping_) return id;
    const auto due = Clock::now() + std::chrono::milliseconds(delay_ms < 0 ? 0 : delay_ms);
    timers_.emplace(std::make_pair(due, id), std::move(fn));
    due_.emplace(id, due);
  }
  cv_.notify_one();
  return id;
}

void EventLoop::cancel(std::uint64_t id) {
  std::lock_guard lk(mu_);
  auto it = due_.find(id);
  if (it == due_.end()) return;
  timers_.erase({it->second, id});
  due_.erase(it);
}

void EventLoop::stop() {
  {
    std::lock_guard lk(mu_);
    if (stopping_ && !thread_.joinable()) return;
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable() && !on_loop_thread()) thread_.join();
}

void EventLoop::run() {
  std::unique_lock lk(mu_);
  for (;;) {
    if (stopping_) break;
    std::function<void()> fn;
    if (!timers_.empty() && timers_.begin()->first.first <= Clock::now()) {
      auto node = timers_.extract(timers_.begin());
      due_.erase(node.key().second);
      fn = std::move(node.mapped());
    } else if (!ready_.empty()) {
      fn = std::move(ready_.front());
      ready_.pop_front();
    } else if (!timers_.empty()) {
      cv_.wait_until(lk, timers_.begin()->first.first);
      continue;
    } else {
      cv_.wait(lk);
      continue;
    }
    lk.unlock();
    fn();
    fn = nullptr;
    lk.lock();
  }
  ready_.clear();
  timers_.clear();
  due_.clear();
}

WorkerPool::WorkerPool(std::size_t threads) {
  for (std::size_t i = 0; i < threads; ++i) {
    threads_.emplace_back([this] {
      std::unique_lock lk(mu_);
      for (;;) {
        cv_.wait(lk, [&] { return stopping_ || !jobs_.empty(); });
        if (stopping_) return;
        auto job = std::move(jobs_.front());
        jobs_.pop_front();
        lk.unlock();
        job();
        lk.lock();
      }
    });
  }
}

WorkerPool::~WorkerPool() { stop(); }

void WorkerPool::submit(std::function<void()> job) {
  {
    std::lock_guard lk(mu_);
    if (stopping_) return;
    jobs_.push_back(std::move(job));
  }
  cv_.notify_one();
}

void WorkerPool::stop() {
  {
    std::lock_guard lk(mu_);
    stopping_ = true;
    jobs_.clear();
  }
  cv_.notify_all();
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
}

}  // namespace cellkit::net
