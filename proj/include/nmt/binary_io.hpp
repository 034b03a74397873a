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

#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

// Little-endian primitives shared by the checkpoint and shard formats.
namespace nmt::binary {

void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);
void write_bytes(std::ostream& out, std::string_view bytes);

/// Each reader throws the given error type's base (nmt::Error subclass
/// chosen by the caller through `what`) on truncated input.
std::uint8_t read_u8(std::istream& in, const std::string& what);
std::uint32_t read_u32(std::istream& in, const std::string& what);
std::uint64_t read_u64(std::istream& in, const std::string& what);
float read_f32(std::istream& in, const std::string& what);
std::string read_bytes(std::istream& in, std::size_t n, const std::string& what);

/// FNV-1a, 64 bit.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace nmt::binary
