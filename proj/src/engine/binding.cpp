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

#include "cellkit/engine/binding.hpp"

#include "cellkit/core/error.hpp"

namespace cellkit::engine {

Params binding_env(const EngineBinding& b, const std::string& task_id, const std::string& instance_id) {
  Params env = b.params;
  env[env::kInputAddr] = b.input.address;
  env[env::kOutputAddr] = b.output.address;
  env[env::kTaskId] = task_id;
  env[env::kInstanceId] = instance_id;
  if (b.params.contains("checkpoint_ref")) env[env::kCheckpoint] = b.params.at("checkpoint_ref");
  if (b.engine_kind == EngineKind::kPrimitive) {
    env[env::kInputProtocol] = b.input.protocol_id;
    env[env::kOutputProtocol] = b.output.protocol_id;
    env[env::kExecutor] = b.executor_id;
  }
  return env;
}

EngineBinding binding_from_env(const Params& env) {
  auto need = [&](const char* key) -> const std::string& {
    auto it = env.find(key);
    if (it == env.end() || it->second.empty()) fail(ErrorCode::kInvalidArgument, std::string(key) + " is not set");
    return it->second;
  };
  EngineBinding b;
  b.engine_kind = EngineKind::kPrimitive;
  b.input = {need(env::kInputProtocol), need(env::kInputAddr)};
  b.output = {need(env::kOutputProtocol), need(env::kOutputAddr)};
  b.executor_id = need(env::kExecutor);
  for (const auto& [k, v] : env) {
    if (k.rfind("CELL_", 0) == 0) b.params[k] = v;
  }
  return b;
}

}  // namespace cellkit::engine
