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

#include "cellkit/bus/message.hpp"

#include <cstdio>

#include "cellkit/core/schemas.hpp"

namespace cellkit::bus {
namespace {

std::string hex128(std::uint64_t hi, std::uint64_t lo) {
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

}  // namespace

std::string random_msg_id() {
  thread_local std::mt19937_64 rng([] {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd(), rd(), rd(), rd(), rd()};
    return std::mt19937_64(seq);
  }());
  return random_msg_id(rng);
}

std::string random_msg_id(std::mt19937_64& rng) {
  const auto hi = rng();
  const auto lo = rng();
  return hex128(hi, lo);
}

Message make_request(std::string msg_type, Json payload) {
  if (payload.is_null()) payload = Json::object();
  return Message{std::move(msg_type), random_msg_id(), std::move(payload)};
}

Message make_ack(const std::string& msg_id, Json payload) {
  if (payload.is_null()) payload = Json::object();
  return Message{std::string(kAck), msg_id, std::move(payload)};
}

Message make_rejection(const std::string& msg_id, ErrorCode code, std::string detail, Json extra) {
  Json payload = Json::object();
  if (extra.is_object()) payload = std::move(extra);
  payload["reason_code"] = std::string(error_code_name(code));
  payload["detail"] = std::move(detail);
  return Message{std::string(kRejected), msg_id, std::move(payload)};
}

Message make_rejection(const std::string& msg_id, const Error& error) {
  return make_rejection(msg_id, error.code(), error.detail(), error.context());
}

const Message& expect_success(const Message& response) {
  if (!response.is_rejection()) return response;
  const auto& p = response.payload;
  Json context = Json::object();
  for (const auto& [k, v] : p.items()) {
    if (k != "reason_code" && k != "detail") context[k] = v;
  }
  fail(error_code_from_name(p.value("reason_code", std::string("Internal"))), p.value("detail", std::string()),
       std::move(context));
}

Json to_envelope(const Message& m) {
  return Json{{"msg_type", m.msg_type}, {"msg_id", m.msg_id}, {"payload", m.payload}};
}

Message from_envelope(const Json& envelope) {
  vocabulary_schema().validate(envelope);
  return Message{envelope.at("msg_type").get<std::string>(), envelope.at("msg_id").get<std::string>(),
                 envelope.at("payload")};
}

std::string encode_envelope(const Message& m) { return to_envelope(m).dump(); }

Message decode_envelope(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::kSchemaViolation, std::string("/: envelope is not valid JSON: ") + e.what());
  }
  return from_envelope(j);
}

}  // namespace cellkit::bus
