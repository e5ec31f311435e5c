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

#include "cellkit/deploy/image_cache.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>

#include "cellkit/core/error.hpp"

namespace cellkit::deploy {

ImageSpec image_spec(const ImplementationModel& model, const DeploymentOption& option) {
  return ImageSpec{option.base_image, model.engine_kind, model.effective_entry_point()};
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorCode::kInternal, "sha256 digest failed");
  }
  std::string out;
  out.reserve(len * 2);
  char hex[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(hex, sizeof(hex), "%02x", digest[i]);
    out += hex;
  }
  return out;
}

std::string image_key(const ImageSpec& spec) {
  // nlohmann::json objects are key-sorted, so dump() is canonical.
  const nlohmann::json canonical{{"base_image", spec.base_image},
                                 {"engine_kind", std::string(to_string(spec.engine_kind))},
                                 {"entry_point", spec.entry_point}};
  return sha256_hex(canonical.dump());
}

ImageCache::ImageCache(std::function<std::int64_t()> now_ms) : now_ms_(std::move(now_ms)) {
  if (!now_ms_) {
    now_ms_ = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
}

ImageResolution ImageCache::resolve(const ImageSpec& spec, const Builder& build) {
  const auto key = image_key(spec);
  std::lock_guard lk(mu_);
  if (auto it = entries_.find(key); it != entries_.end()) {
    ++reuses_;
    return {key, it->second.image_id, true};
  }
  // Held across the build: one node builds one image at a time anyway, and
  // concurrent requests for the same key must not both build.
  auto image_id = build(spec, key);
  entries_[key] = ImageEntry{image_id, now_ms_()};
  ++builds_;
  return {key, image_id, false};
}

std::uint64_t ImageCache::build_counter() const {
  std::lock_guard lk(mu_);
  return builds_;
}

std::uint64_t ImageCache::reuse_counter() const {
  std::lock_guard lk(mu_);
  return reuses_;
}

std::map<std::string, ImageEntry> ImageCache::entries() const {
  std::lock_guard lk(mu_);
  return entries_;
}

}  // namespace cellkit::deploy
