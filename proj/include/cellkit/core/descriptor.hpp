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

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cellkit/core/resources.hpp"
#include "cellkit/core/types.hpp"

namespace cellkit {

enum class EngineKind { kPrimitive, kStandalone };

std::string_view to_string(EngineKind kind);
EngineKind engine_kind_from_string(std::string_view s);

enum class IoDirection { kIn, kOut };

struct IoProtocol {
  IoDirection direction = IoDirection::kIn;
  std::string protocol_id;
  std::string payload_type;

  bool operator==(const IoProtocol&) const = default;
};

struct DeploymentOption {
  std::string deployment_id;
  std::string base_image;
  bool requires_gpu = false;
  std::set<std::string> supported_archs;
  ResourceVector request;

  bool operator==(const DeploymentOption&) const = default;
};

struct ImplementationModel {
  std::string model_name;
  EngineKind engine_kind = EngineKind::kPrimitive;
  // Executor id for primitive models, command line for standalone ones.
  // Primitive models default to their model name.
  std::optional<std::string> entry_point;
  std::optional<std::string> checkpoint_ref;
  std::vector<DeploymentOption> deployments;

  std::string effective_entry_point() const { return entry_point.value_or(model_name); }
  const DeploymentOption* find_deployment(std::string_view id) const;

  bool operator==(const ImplementationModel&) const = default;
};

struct SkillDescriptor {
  std::string operation_name;
  std::vector<IoProtocol> io_protocols;
  std::vector<ImplementationModel> models;

  const ImplementationModel* find_model(std::string_view name) const;

  bool operator==(const SkillDescriptor&) const = default;
};

using SkillLibrary = std::vector<SkillDescriptor>;

// Validates against the shipped schema, then checks cross-field invariants.
// Throws kSchemaViolation (with a JSON-pointer path) or kDuplicateName.
SkillDescriptor parse_skill_descriptor(std::string_view document);
SkillDescriptor skill_descriptor_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const SkillDescriptor& descriptor);
nlohmann::json to_json(const DeploymentOption& option);
DeploymentOption deployment_option_from_json(const nlohmann::json& j);

// Sorted keys, no whitespace.
std::string canonical_form(const SkillDescriptor& descriptor);

// Every *.json file in `dir`, sorted by file name. Duplicate operation
// names across files are rejected with kDuplicateName.
SkillLibrary load_skill_library(const std::filesystem::path& dir);
SkillLibrary skill_library_from_json(const nlohmann::json& array);

const SkillDescriptor* find_operation(const SkillLibrary& library, std::string_view operation);

// The candidate deployment set for a task, narrowed to the preferred option
// when one is named. Throws kUnknownOperation, kUnknownModel or
// kUnknownPreference.
std::vector<DeploymentOption> resolve_deployments(const SkillLibrary& library, const TaskSpec& task);

// Model lookup with the same error behaviour as resolve_deployments.
const ImplementationModel& resolve_model(const SkillLibrary& library, const TaskSpec& task);

}  // namespace cellkit
