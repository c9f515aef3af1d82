// Copyright 2026 The GRAIL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Little-endian byte packing and whole-file helpers shared by the binary
// formats (vector files, parameter files, router files).

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace grail::io {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

class ByteWriter {
 public:
  void bytes(const char* data, std::size_t n) { buf_.append(data, n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

/// Reads from a byte range; running past the end throws kTruncated.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string source, std::size_t offset = 0)
      : data_(data), source_(std::move(source)), pos_(offset) {}

  std::uint32_t u32();
  float f32() { return std::bit_cast<float>(u32()); }
  void skip(std::size_t n);
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::string_view data_;
  std::string source_;
  std::size_t pos_;
};

}  // namespace grail::io
