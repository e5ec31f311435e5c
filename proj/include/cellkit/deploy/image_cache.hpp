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

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <string>

#include "cellkit/core/descriptor.hpp"

namespace cellkit::deploy {

// The part of a deployment that determines image contents. Runtime
// parameters deliberately have no place here.
struct ImageSpec {
  std::string base_image;
  EngineKind engine_kind = EngineKind::kPrimitive;
  std::string entry_point;

  bool operator==(const ImageSpec&) const = default;
};

ImageSpec image_spec(const ImplementationModel& model, const DeploymentOption& option);

// Hex SHA-256 of the canonical JSON form of an ImageSpec.
std::string image_key(const ImageSpec& spec);

std::string sha256_hex(std::string_view bytes);

struct ImageEntry {
  std::string image_id;
  std::int64_t built_at_ms = 0;
};

struct ImageResolution {
  std::string key;
  std::string image_id;
  bool reused = false;
};

class ImageCache {
 public:
  // Builds: key -> image_id. Throws whatever the builder throws, leaving
  // the cache and counters untouched.
  using Builder = std::function<std::string(const ImageSpec&, const std::string& key)>;

  explicit ImageCache(std::function<std::int64_t()> now_ms = {});

  // Exactly one of the counters moves per successful call.
  ImageResolution resolve(const ImageSpec& spec, const Builder& build);

  std::uint64_t build_counter() const;
  std::uint64_t reuse_counter() const;
  std::map<std::string, ImageEntry> entries() const;

 private:
  std::function<std::int64_t()> now_ms_;
  mutable std::mutex mu_;
  std::map<std::string, ImageEntry> entries_;
  std::uint64_t builds_ = 0;
  std::uint64_t reuses_ = 0;
};

}  // namespace cellkit::deploy
