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

#include "cellkit/core/json_schema.hpp"

#include <set>

#include "cellkit/core/error.hpp"

namespace cellkit {
namespace {

using nlohmann::json;

bool matches_type(const std::string& type, const json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  return false;
}

std::string escape_pointer_token(const std::string& token) {
  std::string out;
  for (char c : token) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

SchemaIssue issue(const std::string& path, std::string message) {
  return SchemaIssue{path, std::move(message)};
}

}  // namespace

JsonSchema::JsonSchema(nlohmann::json schema) : schema_(std::move(schema)) {
  if (!schema_.is_object()) fail(ErrorCode::kInvalidArgument, "schema document must be an object");
}

std::optional<SchemaIssue> JsonSchema::check(const nlohmann::json& instance) const {
  return check_node(schema_, instance, "", 0);
}

std::optional<SchemaIssue> JsonSchema::check_at(const std::string& pointer,
                                                 const nlohmann::json& instance) const {
  const json::json_pointer ptr(pointer);
  if (!schema_.contains(ptr)) fail(ErrorCode::kInvalidArgument, "no schema fragment at " + pointer);
  return check_node(schema_.at(ptr), instance, "", 0);
}

bool JsonSchema::has_fragment(const std::string& pointer) const {
  return schema_.contains(json::json_pointer(pointer));
}

namespace {

[[noreturn]] void raise_issue(const SchemaIssue& problem) {
  fail(ErrorCode::kSchemaViolation,
       (problem.path.empty() ? std::string("/") : problem.path) + ": " + problem.message);
}

}  // namespace

void JsonSchema::validate(const nlohmann::json& instance) const {
  if (auto problem = check(instance)) raise_issue(*problem);
}

void JsonSchema::validate_at(const std::string& pointer, const nlohmann::json& instance) const {
  if (auto problem = check_at(pointer, instance)) raise_issue(*problem);
}

bool JsonSchema::pattern_matches(const std::string& pattern, const std::string& value) const {
  std::lock_guard lock(regex_mu_);
  auto it = regex_cache_.find(pattern);
  if (it == regex_cache_.end()) {
    it = regex_cache_.emplace(pattern, std::regex(pattern, std::regex::ECMAScript)).first;
  }
  return std::regex_search(value, it->second);
}

const nlohmann::json& JsonSchema::resolve_ref(const std::string& ref) const {
  if (ref.rfind("#", 0) != 0) fail(ErrorCode::kInvalidArgument, "only local $ref supported: " + ref);
  const json::json_pointer ptr(ref.substr(1));
  if (!schema_.contains(ptr)) fail(ErrorCode::kInvalidArgument, "dangling $ref " + ref);
  return schema_.at(ptr);
}

std::optional<SchemaIssue> JsonSchema::check_node(const json& schema, const json& v,
                                                  const std::string& path, int depth) const {
  if (depth > 64) return issue(path, "schema nesting too deep");
  if (schema.is_boolean()) {
    if (schema.get<bool>()) return std::nullopt;
    return issue(path, "value not allowed");
  }

  if (auto it = schema.find("$ref"); it != schema.end()) {
    if (auto r = check_node(resolve_ref(it->get<std::string>()), v, path, depth + 1)) return r;
  }

  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    if (it->is_string()) {
      ok = matches_type(it->get<std::string>(), v);
    } else {
      for (const auto& t : *it) ok = ok || matches_type(t.get<std::string>(), v);
    }
    if (!ok) return issue(path, "expected type " + it->dump() + ", got " + std::string(v.type_name()));
  }

  if (auto it = schema.find("const"); it != schema.end() && *it != v) {
    return issue(path, "expected constant " + it->dump());
  }
  if (auto it = schema.find("enum"); it != schema.end()) {
    bool found = false;
    for (const auto& e : *it) found = found || e == v;
    if (!found) return issue(path, "value " + v.dump() + " not in " + it->dump());
  }

  if (v.is_number()) {
    if (auto it = schema.find("minimum"); it != schema.end() && v.get<double>() < it->get<double>()) {
      return issue(path, "below minimum " + it->dump());
    }
    if (auto it = schema.find("maximum"); it != schema.end() && v.get<double>() > it->get<double>()) {
      return issue(path, "above maximum " + it->dump());
    }
  }

  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (auto it = schema.find("minLength"); it != schema.end() && s.size() < it->get<std::size_t>()) {
      return issue(path, "shorter than " + it->dump() + " characters");
    }
    if (auto it = schema.find("maxLength"); it != schema.end() && s.size() > it->get<std::size_t>()) {
      return issue(path, "longer than " + it->dump() + " characters");
    }
    if (auto it = schema.find("pattern"); it != schema.end()) {
      if (!pattern_matches(it->get<std::string>(), s)) return issue(path, "does not match pattern " + it->dump());
    }
  }

  if (v.is_array()) {
    if (auto it = schema.find("minItems"); it != schema.end() && v.size() < it->get<std::size_t>()) {
      return issue(path, "fewer than " + it->dump() + " items");
    }
    if (auto it = schema.find("maxItems"); it != schema.end() && v.size() > it->get<std::size_t>()) {
      return issue(path, "more than " + it->dump() + " items");
    }
    if (auto it = schema.find("uniqueItems"); it != schema.end() && it->get<bool>()) {
      std::set<json> seen;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!seen.insert(v[i]).second) return issue(path + "/" + std::to_string(i), "duplicate item");
      }
    }
    if (auto it = schema.find("items"); it != schema.end()) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (auto r = check_node(*it, v[i], path + "/" + std::to_string(i), depth + 1)) return r;
      }
    }
  }

  if (v.is_object()) {
    if (auto it = schema.find("required"); it != schema.end()) {
      for (const auto& key : *it) {
        const auto& k = key.get_ref<const std::string&>();
        if (!v.contains(k)) return issue(path + "/" + escape_pointer_token(k), "required field missing");
      }
    }
    const auto props = schema.find("properties");
    const auto extra = schema.find("additionalProperties");
    for (const auto& [key, value] : v.items()) {
      const auto child = path + "/" + escape_pointer_token(key);
      if (props != schema.end() && props->contains(key)) {
        if (auto r = check_node(props->at(key), value, child, depth + 1)) return r;
      } else if (extra != schema.end()) {
        if (extra->is_boolean() && !extra->get<bool>()) return issue(child, "unknown field");
        if (auto r = check_node(*extra, value, child, depth + 1)) return r;
      }
    }
  }

  if (auto it = schema.find("allOf"); it != schema.end()) {
    for (const auto& sub : *it) {
      if (auto r = check_node(sub, v, path, depth + 1)) return r;
    }
  }
  if (auto it = schema.find("anyOf"); it != schema.end()) {
    std::optional<SchemaIssue> first;
    bool any = false;
    for (const auto& sub : *it) {
      auto r = check_node(sub, v, path, depth + 1);
      if (!r) {
        any = true;
        break;
      }
      if (!first) first = r;
    }
    if (!any) return first ? first : issue(path, "matches no alternative");
  }
  if (auto it = schema.find("oneOf"); it != schema.end()) {
    int matched = 0;
    std::optional<SchemaIssue> first;
    for (const auto& sub : *it) {
      auto r = check_node(sub, v, path, depth + 1);
      if (!r) {
        ++matched;
      } else if (!first) {
        first = r;
      }
    }
    if (matched == 0) return first ? first : issue(path, "matches no alternative");
    if (matched > 1) return issue(path, "matches more than one alternative");
  }
  return std::nullopt;
}

}  // namespace cellkit
