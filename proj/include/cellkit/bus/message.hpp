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

#include <random>
#include <string>

#include <json.hpp>

#include "cellkit/core/error.hpp"

namespace cellkit::bus {

using Json = nlohmann::json;

inline constexpr std::string_view kAck = "ack";
inline constexpr std::string_view kRejected = "error.rejected";

struct Message {
  std::string msg_type;
  std::string msg_id;
  Json payload = Json::object();

  bool is_rejection() const noexcept { return msg_type == kRejected; }

  bool operator==(const Message&) const = default;
};

// 128 random bits, lowercase hex.
std::string random_msg_id();
std::string random_msg_id(std::mt19937_64& rng);

Message make_request(std::string msg_type, Json payload);

Message make_ack(const std::string& msg_id, Json payload = Json::object());

// error.rejected carrying {reason_code, detail} plus any extra fields.
Message make_rejection(const std::string& msg_id, ErrorCode code, std::string detail, Json extra = nullptr);
Message make_rejection(const std::string& msg_id, const Error& error);

// Rethrows a rejection as Error (reason_code mapped back, extras as
// context); returns the message unchanged otherwise.
const Message& expect_success(const Message& response);

Json to_envelope(const Message& m);
// Throws kSchemaViolation on a malformed envelope.
Message from_envelope(const Json& envelope);

std::string encode_envelope(const Message& m);
Message decode_envelope(std::string_view text);

}  // namespace cellkit::bus
