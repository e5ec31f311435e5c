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

#include "cellkit/bus/vocabulary.hpp"

#include "cellkit/core/schemas.hpp"

namespace cellkit::bus {

const Vocabulary& Vocabulary::standard() {
  static const Vocabulary vocab(vocabulary_schema());
  return vocab;
}

Vocabulary::Vocabulary(const JsonSchema& schema) : schema_(&schema) {
  const auto& doc = schema.document();
  if (!doc.contains("messages")) fail(ErrorCode::kInvalidArgument, "vocabulary schema lists no messages");
  for (const auto& [type, _] : doc.at("messages").items()) types_.insert(type);
}

void Vocabulary::validate_payload(const std::string& msg_type, const Json& payload) const {
  if (!contains(msg_type)) fail(ErrorCode::kUnknownMessageType, "'" + msg_type + "' is not in the vocabulary");
  // json_pointer escaping: message names carry no '/' or '~'.
  schema_->validate_at("/messages/" + msg_type, payload);
}

void Vocabulary::validate(const Message& m) const { validate_payload(m.msg_type, m.payload); }

}  // namespace cellkit::bus
