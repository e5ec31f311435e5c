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

#include "cellkit/engine/executor.hpp"

#include "cellkit/core/error.hpp"

namespace cellkit::engine {
namespace {

class LambdaExecutor final : public Executor {
 public:
  LambdaExecutor(std::function<Json(const Json&)> process, std::function<void()> release)
      : process_(std::move(process)), release_(std::move(release)) {}

  Json process(const Json& payload) override { return process_(payload); }
  void release() override {
    if (release_) release_();
  }

 private:
  std::function<Json(const Json&)> process_;
  std::function<void()> release_;
};

}  // namespace

std::unique_ptr<Executor> make_executor(std::function<Json(const Json&)> process, std::function<void()> release) {
  return std::make_unique<LambdaExecutor>(std::move(process), std::move(release));
}

ExecutorRegistry ExecutorRegistry::with_builtins() {
  ExecutorRegistry r;
  r.register_executor("identity", [](const Params&) { return make_executor([](const Json& j) { return j; }); });
  // Wraps each item with the instance that handled it; stands in for a real
  // perception skill in end-to-end runs.
  r.register_executor("echo-transform", [](const Params& p) {
    std::string who = p.contains("CELL_INSTANCE_ID") ? p.at("CELL_INSTANCE_ID") : "";
    return make_executor([who, seq = std::uint64_t{0}](const Json& j) mutable {
      return Json{{"echo", j}, {"by", who}, {"seq", seq++}};
    });
  });
  return r;
}

void ExecutorRegistry::register_executor(const std::string& id, ExecutorFactory factory) {
  if (!factories_.emplace(id, std::move(factory)).second) {
    fail(ErrorCode::kDuplicateExecutor, "executor '" + id + "' is already registered");
  }
}

std::unique_ptr<Executor> ExecutorRegistry::create(const std::string& id, const Params& params) const {
  auto it = factories_.find(id);
  if (it == factories_.end()) fail(ErrorCode::kUnknownExecutor, "no executor named '" + id + "'");
  return it->second(params);
}

std::vector<std::string> ExecutorRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : factories_) out.push_back(id);
  return out;
}

}  // namespace cellkit::engine
