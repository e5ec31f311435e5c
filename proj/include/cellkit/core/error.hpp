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

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace cellkit {

// Every failure the framework reports carries one of these codes. The
// names double as the wire-level reason_code of error.rejected responses.
enum class ErrorCode {
  kInvalidArgument,
  kSchemaViolation,
  kDuplicateName,
  kUnknownOperation,
  kUnknownModel,
  kUnknownPreference,
  kDuplicateRegistration,
  kChainTypeMismatch,
  kUnknownMessageType,
  kNoHandler,
  kHandlerFailure,
  kTimeout,
  kConnectionRefused,
  kMalformedResponse,
  kPortInUse,
  kInvalidInterface,
  kAllJoinAttemptsFailed,
  kDuplicateMember,
  kRegistryBusy,
  kUnknownMember,
  kUnknownPrimary,
  kUnknownDestination,
  kSwitchFailed,
  kSwitchUnconfirmed,
  kNotCoordinator,
  kNoCandidates,
  kNoFeasibleAllocation,
  kSearchSpaceExceeded,
  kExhaustedResource,
  kDuplicateExecutor,
  kUnknownExecutor,
  kUnknownProtocol,
  kInputUnavailable,
  kExecutorFailure,
  kLaunchFailed,
  kEarlyExit,
  kBuildFailed,
  kUnknownTask,
  kPartialTermination,
  kScriptError,
  kInternal,
};

std::string_view error_code_name(ErrorCode code);

// Inverse of error_code_name; unknown names map to kInternal.
ErrorCode error_code_from_name(std::string_view name);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail, nlohmann::json context = nullptr);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  // Structured extras (e.g. the failing task id); null when absent.
  const nlohmann::json& context() const noexcept { return context_; }

 private:
  ErrorCode code_;
  std::string detail_;
  nlohmann::json context_;
};

[[noreturn]] inline void fail(ErrorCode code, std::string detail, nlohmann::json context = nullptr) {
  throw Error(code, std::move(detail), std::move(context));
}

}  // namespace cellkit
