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

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace cellkit::engine {

using Json = nlohmann::json;
using Params = std::map<std::string, std::string>;

// User code plugged into the primitive engine. process() is only ever called
// from the instance's loop thread, so implementations need not be reentrant.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual Json process(const Json& payload) = 0;
  virtual void release() = 0;
};

using ExecutorFactory = std::function<std::unique_ptr<Executor>(const Params&)>;

class ExecutorRegistry {
 public:
  // identity and echo-transform.
  static ExecutorRegistry with_builtins();

  // Throws kDuplicateExecutor.
  void register_executor(const std::string& id, ExecutorFactory factory);
  bool contains(const std::string& id) const { return factories_.contains(id); }
  // Throws kUnknownExecutor.
  std::unique_ptr<Executor> create(const std::string& id, const Params& params) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, ExecutorFactory> factories_;
};

// Adapts a lambda; release is a no-op unless given.
std::unique_ptr<Executor> make_executor(std::function<Json(const Json&)> process,
                                        std::function<void()> release = {});

}  // namespace cellkit::engine
