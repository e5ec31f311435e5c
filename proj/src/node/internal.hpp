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

#include <memory>
#include <utility>
#include <vector>

#include "cellkit/bus/vocabulary.hpp"
#include "cellkit/node/env.hpp"

namespace cellkit::node {
namespace msg = bus::msg;
}

namespace cellkit::node::detail {

// Sends every request at once; `done` gets the results in request order
// after the last one completes.
inline void gather(NodeEnv& env, std::vector<std::pair<Endpoint, bus::Message>> requests, std::int64_t timeout_ms,
                   std::function<void(std::vector<RpcResult>)> done) {
  if (requests.empty()) {
    done({});
    return;
  }
  struct State {
    std::vector<RpcResult> results;
    std::size_t remaining;
    std::function<void(std::vector<RpcResult>)> done;
  };
  auto state = std::make_shared<State>(State{std::vector<RpcResult>(requests.size()), requests.size(), std::move(done)});
  for (std::size_t i = 0; i < requests.size(); ++i) {
    env.request(requests[i].first, std::move(requests[i].second), timeout_ms, [state, i](RpcResult r) {
      state->results[i] = std::move(r);
      if (--state->remaining == 0) state->done(std::move(state->results));
    });
  }
}

inline Json nested(const Json& payload, const char* key) {
  auto it = payload.find(key);
  return it == payload.end() ? Json() : *it;
}

}  // namespace cellkit::node::detail
