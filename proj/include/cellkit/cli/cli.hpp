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

#include <iosfwd>
#include <string>
#include <vector>

#include "cellkit/core/error.hpp"

namespace cellkit::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitConnectivity = 3, kExitRejected = 4 };

struct Streams {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
};

// Environment defaults: CELLCTL_COORDINATOR (host:port) and CELLCTL_FORMAT
// (table|json).
struct CliConfig {
  std::string default_coordinator = "127.0.0.1:7000";
  std::string output_format = "table";

  static CliConfig from_environment();
};

// The whole cellctl command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, Streams io, const CliConfig& config = CliConfig::from_environment());

// Transport failures are connectivity problems; everything else raised
// before a response arrives is a usage problem.
int exit_code_for(const Error& e);

}  // namespace cellkit::cli
