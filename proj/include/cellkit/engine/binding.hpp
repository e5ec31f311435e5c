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

#include <map>
#include <string>

#include "cellkit/core/descriptor.hpp"
#include "cellkit/core/types.hpp"
#include "cellkit/engine/executor.hpp"

namespace cellkit::engine {

// Environment variables through which an instance receives its parameters.
namespace env {
inline constexpr const char* kInputAddr = "CELL_INPUT_ADDR";
inline constexpr const char* kOutputAddr = "CELL_OUTPUT_ADDR";
inline constexpr const char* kCheckpoint = "CELL_CHECKPOINT";
inline constexpr const char* kTaskId = "CELL_TASK_ID";
inline constexpr const char* kInstanceId = "CELL_INSTANCE_ID";
// Needed only by the primitive engine binary.
inline constexpr const char* kInputProtocol = "CELL_INPUT_PROTOCOL";
inline constexpr const char* kOutputProtocol = "CELL_OUTPUT_PROTOCOL";
inline constexpr const char* kExecutor = "CELL_EXECUTOR";
}  // namespace env

struct EngineBinding {
  EngineKind engine_kind = EngineKind::kPrimitive;
  IoEndpoint input;
  IoEndpoint output;
  // Executor id (primitive) or command line (standalone).
  std::string executor_id;
  // checkpoint_ref and knobs; passed through to the executor factory.
  Params params;
};

// The CELL_* variables for a binding plus its identity.
Params binding_env(const EngineBinding& binding, const std::string& task_id, const std::string& instance_id);

// Reads a binding back from CELL_* variables; throws kInvalidArgument when
// a required variable is missing.
EngineBinding binding_from_env(const Params& env);

}  // namespace cellkit::engine
