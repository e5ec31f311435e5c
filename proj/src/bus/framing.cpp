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

#include "cellkit/bus/framing.hpp"

#include "cellkit/core/error.hpp"

namespace cellkit::bus {

std::string encode_frame(std::string_view body) {
  if (body.size() > kMaxFrameBytes) fail(ErrorCode::kInvalidArgument, "frame body too large");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(body);
  return out;
}

std::optional<std::string> FrameDecoder::next() {
  if (buffered() < 4) return std::nullopt;
  const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data() + offset_);
  const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                          (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
  if (n > max_frame_) {
    fail(ErrorCode::kMalformedResponse, "frame of " + std::to_string(n) + " bytes exceeds limit");
  }
  if (buffered() < 4 + std::size_t{n}) return std::nullopt;
  std::string body = buffer_.substr(offset_ + 4, n);
  offset_ += 4 + n;
  // Compact once the consumed prefix dominates the buffer.
  if (offset_ > 4096 && offset_ * 2 > buffer_.size()) {
    buffer_.erase(0, offset_);
    offset_ = 0;
  }
  return body;
}

}  // namespace cellkit::bus
