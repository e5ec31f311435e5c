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

#include "cellkit/core/error.hpp"

#include <array>
#include <utility>

namespace cellkit {
namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 41> kNames{{
    {ErrorCode::kInvalidArgument, "InvalidArgument"},
    {ErrorCode::kSchemaViolation, "SchemaViolation"},
    {ErrorCode::kDuplicateName, "DuplicateName"},
    {ErrorCode::kUnknownOperation, "UnknownOperation"},
    {ErrorCode::kUnknownModel, "UnknownModel"},
    {ErrorCode::kUnknownPreference, "UnknownPreference"},
    {ErrorCode::kDuplicateRegistration, "DuplicateRegistration"},
    {ErrorCode::kChainTypeMismatch, "ChainTypeMismatch"},
    {ErrorCode::kUnknownMessageType, "UnknownMessageType"},
    {ErrorCode::kNoHandler, "NoHandler"},
    {ErrorCode::kHandlerFailure, "HandlerFailure"},
    {ErrorCode::kTimeout, "Timeout"},
    {ErrorCode::kConnectionRefused, "ConnectionRefused"},
    {ErrorCode::kMalformedResponse, "MalformedResponse"},
    {ErrorCode::kPortInUse, "PortInUse"},
    {ErrorCode::kInvalidInterface, "InvalidInterface"},
    {ErrorCode::kAllJoinAttemptsFailed, "AllJoinAttemptsFailed"},
    {ErrorCode::kDuplicateMember, "DuplicateMember"},
    {ErrorCode::kRegistryBusy, "RegistryBusy"},
    {ErrorCode::kUnknownMember, "UnknownMember"},
    {ErrorCode::kUnknownPrimary, "UnknownPrimary"},
    {ErrorCode::kUnknownDestination, "UnknownDestination"},
    {ErrorCode::kSwitchFailed, "SwitchFailed"},
    {ErrorCode::kSwitchUnconfirmed, "SwitchUnconfirmed"},
    {ErrorCode::kNotCoordinator, "NotCoordinator"},
    {ErrorCode::kNoCandidates, "NoCandidates"},
    {ErrorCode::kNoFeasibleAllocation, "NoFeasibleAllocation"},
    {ErrorCode::kSearchSpaceExceeded, "SearchSpaceExceeded"},
    {ErrorCode::kExhaustedResource, "ExhaustedResource"},
    {ErrorCode::kDuplicateExecutor, "DuplicateExecutor"},
    {ErrorCode::kUnknownExecutor, "UnknownExecutor"},
    {ErrorCode::kUnknownProtocol, "UnknownProtocol"},
    {ErrorCode::kInputUnavailable, "InputUnavailable"},
    {ErrorCode::kExecutorFailure, "ExecutorFailure"},
    {ErrorCode::kLaunchFailed, "LaunchFailed"},
    {ErrorCode::kEarlyExit, "EarlyExit"},
    {ErrorCode::kBuildFailed, "BuildFailed"},
    {ErrorCode::kUnknownTask, "UnknownTask"},
    {ErrorCode::kPartialTermination, "PartialTermination"},
    {ErrorCode::kScriptError, "ScriptError"},
    {ErrorCode::kInternal, "Internal"},
}};

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Internal";
}

ErrorCode error_code_from_name(std::string_view name) {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return ErrorCode::kInternal;
}

Error::Error(ErrorCode code, std::string detail, nlohmann::json context)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
      code_(code),
      detail_(std::move(detail)),
      context_(std::move(context)) {}

}  // namespace cellkit
