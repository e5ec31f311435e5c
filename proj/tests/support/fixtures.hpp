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

#include <string>

#include "cellkit/core/descriptor.hpp"
#include "cellkit/core/types.hpp"

namespace fixtures {

using namespace cellkit;

inline NodeRecord node(std::string id, ResourceVector capacity, ResourceVector usage = {},
                       std::string arch = "amd64") {
  NodeRecord n;
  n.id = NodeId(std::move(id));
  n.arch = std::move(arch);
  n.control_endpoint = Endpoint{"127.0.0.1", 7400};
  n.registry_switch_endpoint = Endpoint{"127.0.0.1", 7401};
  n.capacity = capacity;
  n.usage = usage;
  return n;
}

inline DeploymentOption option(std::string id, ResourceVector request, std::string arch = "amd64") {
  DeploymentOption d;
  d.deployment_id = std::move(id);
  d.base_image = "debian:bookworm-slim";
  d.requires_gpu = request.gmem > 0;
  d.supported_archs = {std::move(arch)};
  d.request = request;
  return d;
}

inline SkillDescriptor skill(std::string op, std::vector<DeploymentOption> options,
                             std::string model = "model") {
  SkillDescriptor d;
  d.operation_name = std::move(op);
  ImplementationModel m;
  m.model_name = std::move(model);
  m.deployments = std::move(options);
  d.models.push_back(std::move(m));
  return d;
}

inline TaskSpec task(std::string id, std::string op, std::string model = "model",
                     std::optional<std::string> pref = std::nullopt) {
  TaskSpec t;
  t.task_id = std::move(id);
  t.operation_name = std::move(op);
  t.model_name = std::move(model);
  t.input = {"tcp-lines", "127.0.0.1:9000"};
  t.output = {"tcp-lines", "127.0.0.1:9001"};
  t.deployment_preference = std::move(pref);
  return t;
}

}  // namespace fixtures
