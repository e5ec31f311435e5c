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

#include "cellkit/core/schemas.hpp"

#include <string>
#include <utility>

#include "cellkit/core/error.hpp"

namespace cellkit {
namespace detail {
extern const std::pair<std::string_view, std::string_view> kEmbeddedSchemas[];
extern const int kEmbeddedSchemaCount;
}  // namespace detail

std::string_view embedded_schema_text(std::string_view file_name) {
  for (int i = 0; i < detail::kEmbeddedSchemaCount; ++i) {
    if (detail::kEmbeddedSchemas[i].first == file_name) return detail::kEmbeddedSchemas[i].second;
  }
  fail(ErrorCode::kInternal, "no embedded schema named " + std::string(file_name));
}

const JsonSchema& skill_descriptor_schema() {
  static const JsonSchema schema(nlohmann::json::parse(embedded_schema_text("skill_descriptor.schema.json")));
  return schema;
}

const JsonSchema& vocabulary_schema() {
  static const JsonSchema schema(nlohmann::json::parse(embedded_schema_text("vocabulary.schema.json")));
  return schema;
}

}  // namespace cellkit
