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

#include "cellkit/bus/handler_registry.hpp"

#include <memory>

namespace cellkit::bus {
namespace {

Message rejection_from_exception(const std::string& msg_id, std::exception_ptr ep, Json extra) {
  try {
    std::rethrow_exception(ep);
  } catch (const Error& e) {
    Json ctx = e.context().is_object() ? e.context() : Json::object();
    if (extra.is_object()) ctx.update(extra);
    return make_rejection(msg_id, e.code(), e.detail(), std::move(ctx));
  } catch (const std::exception& e) {
    return make_rejection(msg_id, ErrorCode::kHandlerFailure, e.what(), std::move(extra));
  } catch (...) {
    return make_rejection(msg_id, ErrorCode::kHandlerFailure, "unknown exception", std::move(extra));
  }
}

}  // namespace

Handler make_handler(std::string input_type, std::string output_type, std::function<Message(const Message&)> fn) {
  return Handler{std::move(input_type), std::move(output_type),
                 [fn = std::move(fn)](const Message& in, Reply reply) { reply(fn(in)); }};
}

HandlerRegistry::HandlerRegistry(const Vocabulary& vocabulary) : vocabulary_(&vocabulary) {}

void HandlerRegistry::register_handler(const std::string& msg_type, Handler handler) {
  if (sealed_) fail(ErrorCode::kInvalidArgument, "registry is sealed");
  if (!vocabulary_->contains(msg_type)) {
    fail(ErrorCode::kUnknownMessageType, "'" + msg_type + "' is not in the vocabulary");
  }
  if (handler.input_type.empty()) handler.input_type = msg_type;
  if (handler.input_type != msg_type) {
    fail(ErrorCode::kChainTypeMismatch, "handler input type '" + handler.input_type + "' does not match '" +
                                            msg_type + "'");
  }
  if (!dedicated_.emplace(msg_type, std::move(handler)).second) {
    fail(ErrorCode::kDuplicateRegistration, "a handler for '" + msg_type + "' is already registered");
  }
}

void HandlerRegistry::register_pipeline(const std::string& start_type, std::vector<Handler> chain) {
  if (sealed_) fail(ErrorCode::kInvalidArgument, "registry is sealed");
  if (!vocabulary_->contains(start_type)) {
    fail(ErrorCode::kUnknownMessageType, "'" + start_type + "' is not in the vocabulary");
  }
  if (chain.empty()) fail(ErrorCode::kInvalidArgument, "pipeline needs at least one handler");
  if (pipelines_.contains(start_type)) {
    fail(ErrorCode::kDuplicateRegistration, "a pipeline starting at '" + start_type + "' is already registered");
  }
  if (chain.front().input_type != start_type) {
    fail(ErrorCode::kChainTypeMismatch,
         "first handler consumes '" + chain.front().input_type + "', pipeline starts at '" + start_type + "'");
  }
  for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
    if (chain[k].output_type != chain[k + 1].input_type) {
      fail(ErrorCode::kChainTypeMismatch, "handler " + std::to_string(k) + " emits '" + chain[k].output_type +
                                              "' but handler " + std::to_string(k + 1) + " consumes '" +
                                              chain[k + 1].input_type + "'");
    }
  }
  pipelines_.emplace(start_type, std::move(chain));
}

void HandlerRegistry::dispatch(const Message& request, Reply reply) const {
  try {
    vocabulary_->validate(request);
  } catch (const Error& e) {
    reply(make_rejection(request.msg_id, e));
    return;
  }

  if (auto it = pipelines_.find(request.msg_type); it != pipelines_.end()) {
    run_stage(it->second, 0, request, request.msg_id, reply);
    return;
  }
  if (auto it = dedicated_.find(request.msg_type); it != dedicated_.end()) {
    const auto& msg_id = request.msg_id;
    auto once = std::make_shared<bool>(false);
    try {
      it->second.fn(request, [reply, msg_id, once](Message out) {
        if (*once) return;
        *once = true;
        out.msg_id = msg_id;
        reply(std::move(out));
      });
    } catch (...) {
      if (!*once) {
        *once = true;
        reply(rejection_from_exception(msg_id, std::current_exception(), nullptr));
      }
    }
    return;
  }
  reply(make_rejection(request.msg_id, ErrorCode::kNoHandler,
                       "no pipeline or handler registered for '" + request.msg_type + "'"));
}

void HandlerRegistry::run_stage(const std::vector<Handler>& chain, std::size_t index, const Message& input,
                                const std::string& msg_id, const Reply& reply) const {
  const Json where{{"handler_index", index}};
  auto once = std::make_shared<bool>(false);
  auto next = [this, &chain, index, msg_id, reply, once, where](Message out) {
    if (*once) return;
    *once = true;
    out.msg_id = msg_id;
    if (out.is_rejection()) {
      out.payload["handler_index"] = index;
      reply(std::move(out));
      return;
    }
    if (index + 1 == chain.size()) {
      reply(std::move(out));
      return;
    }
    if (out.msg_type != chain[index + 1].input_type) {
      reply(make_rejection(msg_id, ErrorCode::kHandlerFailure,
                           "handler emitted '" + out.msg_type + "', expected '" + chain[index].output_type + "'",
                           where));
      return;
    }
    run_stage(chain, index + 1, out, msg_id, reply);
  };
  try {
    chain[index].fn(input, next);
  } catch (...) {
    if (!*once) {
      *once = true;
      reply(rejection_from_exception(msg_id, std::current_exception(), where));
    }
  }
}

}  // namespace cellkit::bus
