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

// Primitive skill engine host. Reads its binding from CELL_* environment
// variables, runs the loop until SIGTERM/SIGINT, and exits 0 on a clean
// stop or 1 when the instance failed.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "cellkit/core/error.hpp"
#include "cellkit/engine/binding.hpp"
#include "cellkit/engine/primitive.hpp"

extern char** environ;

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

}  // namespace

int main() {
  using namespace cellkit;
  using namespace cellkit::engine;

  std::signal(SIGTERM, on_signal);
  std::signal(SIGINT, on_signal);
  std::signal(SIGPIPE, SIG_IGN);

  Params env;
  for (char** e = environ; e && *e; ++e) {
    std::string kv = *e;
    auto eq = kv.find('=');
    if (eq != std::string::npos) env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }

  try {
    const auto binding = binding_from_env(env);
    const auto executors = ExecutorRegistry::with_builtins();
    const auto protocols = ProtocolRegistry::with_builtins();
    PrimitiveInstance instance(binding, executors, protocols);
    std::cerr << "cellkit-engine: " << binding.executor_id << " " << binding.input.protocol_id << ":"
              << binding.input.address << " -> " << binding.output.protocol_id << ":" << binding.output.address
              << std::endl;
    while (!g_stop) {
      if (instance.wait_until([](const LoopStats& s) { return s.status != InstanceStatus::kRunning; },
                              std::chrono::milliseconds(100))) {
        break;
      }
    }
    instance.stop();
    const auto s = instance.stats();
    std::cerr << "cellkit-engine: processed=" << s.processed << " published=" << s.published
              << " failures=" << s.failures << " status=" << to_string(s.status) << std::endl;
    return s.status == InstanceStatus::kFailed ? 1 : 0;
  } catch (const Error& e) {
    std::cerr << "cellkit-engine: " << error_code_name(e.code()) << ": " << e.detail() << std::endl;
    return 2;
  }
}
