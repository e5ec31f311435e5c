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

#include "cellkit/core/descriptor.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cellkit/core/error.hpp"
#include "cellkit/core/schemas.hpp"

namespace cellkit {

using nlohmann::json;

std::string_view to_string(EngineKind kind) {
  return kind == EngineKind::kStandalone ? "standalone" : "primitive";
}

EngineKind engine_kind_from_string(std::string_view s) {
  if (s == "primitive") return EngineKind::kPrimitive;
  if (s == "standalone") return EngineKind::kStandalone;
  fail(ErrorCode::kInvalidArgument, "unknown engine kind '" + std::string(s) + "'");
}

const DeploymentOption* ImplementationModel::find_deployment(std::string_view id) const {
  for (const auto& d : deployments) {
    if (d.deployment_id == id) return &d;
  }
  return nullptr;
}

const ImplementationModel* SkillDescriptor::find_model(std::string_view name) const {
  for (const auto& m : models) {
    if (m.model_name == name) return &m;
  }
  return nullptr;
}

DeploymentOption deployment_option_from_json(const json& j) {
  DeploymentOption d;
  d.deployment_id = j.at("deployment_id").get<std::string>();
  d.base_image = j.at("base_image").get<std::string>();
  d.requires_gpu = j.at("requires_gpu").get<bool>();
  for (const auto& a : j.at("supported_archs")) d.supported_archs.insert(a.get<std::string>());
  d.request = j.at("request").get<ResourceVector>();
  return d;
}

SkillDescriptor skill_descriptor_from_json(const json& doc) {
  skill_descriptor_schema().validate(doc);

  SkillDescriptor out;
  out.operation_name = doc.at("operation_name").get<std::string>();
  for (const auto& p : doc.at("io_protocols")) {
    IoProtocol proto;
    proto.direction = p.at("direction").get<std::string>() == "in" ? IoDirection::kIn : IoDirection::kOut;
    proto.protocol_id = p.at("protocol_id").get<std::string>();
    proto.payload_type = p.at("payload_type").get<std::string>();
    out.io_protocols.push_back(std::move(proto));
  }

  const auto& models = doc.at("models");
  std::set<std::string> model_names;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const auto& m = models[mi];
    ImplementationModel model;
    model.model_name = m.at("model_name").get<std::string>();
    if (!model_names.insert(model.model_name).second) {
      fail(ErrorCode::kDuplicateName, "/models/" + std::to_string(mi) + "/model_name: duplicate model '" +
                                          model.model_name + "'");
    }
    model.engine_kind = engine_kind_from_string(m.at("engine_kind").get<std::string>());
    if (auto it = m.find("entry_point"); it != m.end()) model.entry_point = it->get<std::string>();
    if (auto it = m.find("checkpoint_ref"); it != m.end()) model.checkpoint_ref = it->get<std::string>();

    const auto& deps = m.at("deployments");
    std::set<std::string> dep_ids;
    for (std::size_t di = 0; di < deps.size(); ++di) {
      const std::string base = "/models/" + std::to_string(mi) + "/deployments/" + std::to_string(di);
      DeploymentOption d = deployment_option_from_json(deps[di]);
      if (!dep_ids.insert(d.deployment_id).second) {
        fail(ErrorCode::kDuplicateName,
             base + "/deployment_id: duplicate deployment '" + d.deployment_id + "'");
      }
      if (d.requires_gpu != (d.request.gmem > 0)) {
        fail(ErrorCode::kSchemaViolation,
             base + ": requires_gpu must be true exactly when request.gmem > 0");
      }
      model.deployments.push_back(std::move(d));
    }
    out.models.push_back(std::move(model));
  }
  return out;
}

SkillDescriptor parse_skill_descriptor(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kSchemaViolation, std::string("/: not valid JSON: ") + e.what());
  }
  return skill_descriptor_from_json(doc);
}

json to_json(const DeploymentOption& d) {
  return json{{"deployment_id", d.deployment_id},
              {"base_image", d.base_image},
              {"requires_gpu", d.requires_gpu},
              {"supported_archs", std::vector<std::string>(d.supported_archs.begin(), d.supported_archs.end())},
              {"request", d.request}};
}

json to_json(const SkillDescriptor& descriptor) {
  json protos = json::array();
  for (const auto& p : descriptor.io_protocols) {
    protos.push_back({{"direction", p.direction == IoDirection::kIn ? "in" : "out"},
                      {"protocol_id", p.protocol_id},
                      {"payload_type", p.payload_type}});
  }
  json models = json::array();
  for (const auto& m : descriptor.models) {
    json deps = json::array();
    for (const auto& d : m.deployments) deps.push_back(to_json(d));
    json model{{"model_name", m.model_name}, {"engine_kind", to_string(m.engine_kind)}, {"deployments", deps}};
    if (m.entry_point) model["entry_point"] = *m.entry_point;
    if (m.checkpoint_ref) model["checkpoint_ref"] = *m.checkpoint_ref;
    models.push_back(std::move(model));
  }
  return json{{"operation_name", descriptor.operation_name}, {"io_protocols", protos}, {"models", models}};
}

std::string canonical_form(const SkillDescriptor& descriptor) {
  // nlohmann::json objects keep keys in sorted order.
  return to_json(descriptor).dump();
}

SkillLibrary skill_library_from_json(const json& array) {
  if (!array.is_array()) fail(ErrorCode::kSchemaViolation, "/: skill library must be an array");
  SkillLibrary lib;
  std::set<std::string> ops;
  for (const auto& doc : array) {
    auto d = skill_descriptor_from_json(doc);
    if (!ops.insert(d.operation_name).second) {
      fail(ErrorCode::kDuplicateName, "duplicate operation '" + d.operation_name + "'");
    }
    lib.push_back(std::move(d));
  }
  return lib;
}

SkillLibrary load_skill_library(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  json arr = json::array();
  for (const auto& f : files) {
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      arr.push_back(json::parse(ss.str()));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::kSchemaViolation, f.string() + ": not valid JSON: " + e.what());
    }
  }
  return skill_library_from_json(arr);
}

const SkillDescriptor* find_operation(const SkillLibrary& library, std::string_view operation) {
  for (const auto& d : library) {
    if (d.operation_name == operation) return &d;
  }
  return nullptr;
}

const ImplementationModel& resolve_model(const SkillLibrary& library, const TaskSpec& task) {
  const auto* desc = find_operation(library, task.operation_name);
  if (desc == nullptr) {
    fail(ErrorCode::kUnknownOperation, "task '" + task.task_id + "': no skill for operation '" +
                                           task.operation_name + "'");
  }
  const auto* model = desc->find_model(task.model_name);
  if (model == nullptr) {
    fail(ErrorCode::kUnknownModel, "task '" + task.task_id + "': operation '" + task.operation_name +
                                       "' has no model '" + task.model_name + "'");
  }
  return *model;
}

std::vector<DeploymentOption> resolve_deployments(const SkillLibrary& library, const TaskSpec& task) {
  const auto& model = resolve_model(library, task);
  if (!task.deployment_preference) return model.deployments;
  const auto* d = model.find_deployment(*task.deployment_preference);
  if (d == nullptr) {
    fail(ErrorCode::kUnknownPreference, "task '" + task.task_id + "': model '" + model.model_name +
                                            "' has no deployment '" + *task.deployment_preference + "'");
  }
  return {*d};
}

}  // namespace cellkit
