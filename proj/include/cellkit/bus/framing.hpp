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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace cellkit::bus {

// Frames larger than this are treated as a protocol violation.
inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

// 4-byte big-endian length followed by the body.
std::string encode_frame(std::string_view body);

// Incremental decoder for a byte stream of frames.
class FrameDecoder {
 public:
  explicit FrameDecoder(std::uint32_t max_frame = kMaxFrameBytes) : max_frame_(max_frame) {}

  void feed(const char* data, std::size_t n) { buffer_.append(data, n); }
  void feed(std::string_view bytes) { buffer_.append(bytes); }

  // Next complete body, if one is buffered. Throws kMalformedResponse when
  // a length prefix exceeds the limit.
  std::optional<std::string> next();

  std::size_t buffered() const noexcept { return buffer_.size() - offset_; }

 private:
  std::string buffer_;
  std::size_t offset_ = 0;
  std::uint32_t max_frame_;
};

}  // namespace cellkit::bus
