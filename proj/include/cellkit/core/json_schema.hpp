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
#include <mutex>
#include <optional>
#include <regex>
#include <string>

#include <json.hpp>

namespace cellkit {

struct SchemaIssue {
  std::string path;  // JSON pointer into the instance, "" for the root
  std::string message;
};

// Validator for the JSON Schema subset the shipped schemas use: type,
// properties, required, additionalProperties, items, enum, const, minimum,
// maximum, minLength, minItems, uniqueItems, pattern, allOf/anyOf/oneOf and
// local "#/$defs/..." references.
class JsonSchema {
 public:
  explicit JsonSchema(nlohmann::json schema);

  // First violation found, or nullopt when the instance conforms.
  std::optional<SchemaIssue> check(const nlohmann::json& instance) const;

  // Checks against the sub-schema at `pointer` (e.g. "/messages/cell.join");
  // local references still resolve against the whole document.
  std::optional<SchemaIssue> check_at(const std::string& pointer, const nlohmann::json& instance) const;

  // Throws Error(kSchemaViolation) with "path: message" detail.
  void validate(const nlohmann::json& instance) const;
  void validate_at(const std::string& pointer, const nlohmann::json& instance) const;

  bool has_fragment(const std::string& pointer) const;

  const nlohmann::json& document() const noexcept { return schema_; }

 private:
  std::optional<SchemaIssue> check_node(const nlohmann::json& schema, const nlohmann::json& instance,
                                        const std::string& path, int depth) const;
  const nlohmann::json& resolve_ref(const std::string& ref) const;
  bool pattern_matches(const std::string& pattern, const std::string& value) const;

  nlohmann::json schema_;
  mutable std::mutex regex_mu_;
  mutable std::map<std::string, std::regex> regex_cache_;
};

}  // namespace cellkit
