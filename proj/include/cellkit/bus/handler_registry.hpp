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

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cellkit/bus/message.hpp"
#include "cellkit/bus/vocabulary.hpp"

namespace cellkit::bus {

// Called exactly once with the handler's output message.
using Reply = std::function<void(Message)>;

// A handler consumes a message of `input_type` and replies with a message of
// `output_type` (or an error.rejected). It may reply asynchronously.
struct Handler {
  std::string input_type;
  std::string output_type;
  std::function<void(const Message&, Reply)> fn;
};

// Wraps a synchronous function; exceptions become rejections.
Handler make_handler(std::string input_type, std::string output_type,
                     std::function<Message(const Message&)> fn);

// Dedicated handlers keyed by message type plus multi-handler pipelines keyed
// by their start type. Registration is only allowed before seal().
class HandlerRegistry {
 public:
  explicit HandlerRegistry(const Vocabulary& vocabulary = Vocabulary::standard());

  // Throws kUnknownMessageType or kDuplicateRegistration.
  void register_handler(const std::string& msg_type, Handler handler);

  // Throws kDuplicateRegistration, kUnknownMessageType, or kChainTypeMismatch
  // when a stage's output type is not the next stage's input type.
  void register_pipeline(const std::string& start_type, std::vector<Handler> chain);

  void seal() noexcept { sealed_ = true; }
  bool sealed() const noexcept { return sealed_; }

  bool has_pipeline(const std::string& msg_type) const { return pipelines_.contains(msg_type); }
  bool has_handler(const std::string& msg_type) const { return dedicated_.contains(msg_type); }

  // Validates, then routes: pipeline first, dedicated handler second,
  // NoHandler rejection otherwise. The reply always carries the request's
  // msg_id. Safe to call concurrently once sealed.
  void dispatch(const Message& request, Reply reply) const;

  const Vocabulary& vocabulary() const noexcept { return *vocabulary_; }

 private:
  void run_stage(const std::vector<Handler>& chain, std::size_t index, const Message& input,
                 const std::string& msg_id, const Reply& reply) const;

  const Vocabulary* vocabulary_;
  std::map<std::string, Handler> dedicated_;
  std::map<std::string, std::vector<Handler>> pipelines_;
  bool sealed_ = false;
};

}  // namespace cellkit::bus
