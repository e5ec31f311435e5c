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

#include <set>
#include <string>

#include "cellkit/bus/message.hpp"
#include "cellkit/core/json_schema.hpp"

namespace cellkit::bus {

// Message types and their payload schemas, as shipped in
// schemas/vocabulary.schema.json.
class Vocabulary {
 public:
  // The shipped vocabulary.
  static const Vocabulary& standard();

  explicit Vocabulary(const JsonSchema& schema);

  bool contains(const std::string& msg_type) const { return types_.contains(msg_type); }
  const std::set<std::string>& types() const noexcept { return types_; }

  // Throws kUnknownMessageType or kSchemaViolation.
  void validate(const Message& m) const;
  void validate_payload(const std::string& msg_type, const Json& payload) const;

 private:
  const JsonSchema* schema_;
  std::set<std::string> types_;
};

namespace msg {
inline constexpr const char* kCellQuery = "cell.query";
inline constexpr const char* kCellInfo = "cell.info";
inline constexpr const char* kCellJoin = "cell.join";
inline constexpr const char* kCellLeave = "cell.leave";
inline constexpr const char* kCellTransfer = "cell.transfer";
inline constexpr const char* kNodeAnnounce = "node.announce";
inline constexpr const char* kInstanceStatus = "instance.status";
inline constexpr const char* kInstanceDeploy = "instance.deploy";
inline constexpr const char* kInstanceStop = "instance.stop";
inline constexpr const char* kTaskSubmit = "task.submit";
inline constexpr const char* kTaskPlan = "task.plan";
inline constexpr const char* kTaskTerminate = "task.terminate";
}  // namespace msg

}  // namespace cellkit::bus
