// Copyright (c) 2026 The nmt Authors. All Rights Reserved.
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

#include "nmt/binary_io.hpp"

#include <bit>
#include <cstring>

#include "nmt/error.hpp"

namespace nmt::binary {

namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = char((v >> (8 * i)) & 0xff);
  out.write(buf, sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw DataError("truncated " + what);
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= T(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { out.put(char(v)); }
void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }
void write_bytes(std::ostream& out, std::string_view bytes) { out.write(bytes.data(), std::streamsize(bytes.size())); }

std::uint8_t read_u8(std::istream& in, const std::string& what) { return read_le<std::uint8_t>(in, what); }
std::uint32_t read_u32(std::istream& in, const std::string& what) { return read_le<std::uint32_t>(in, what); }
std::uint64_t read_u64(std::istream& in, const std::string& what) { return read_le<std::uint64_t>(in, what); }
float read_f32(std::istream& in, const std::string& what) {
  return std::bit_cast<float>(read_le<std::uint32_t>(in, what));
}

std::string read_bytes(std::istream& in, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  if (n && !in.read(s.data(), std::streamsize(n))) throw DataError("truncated " + what);
  return s;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (char c : bytes) {
    h ^= std::uint64_t(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace nmt::binary
