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

#include "nmt/params.hpp"

#include <fstream>

#include "nmt/binary_io.hpp"
#include "nmt/error.hpp"

namespace nmt {

bool valid_param_name(std::string_view name) {
  if (name.empty()) return false;
  bool segment_empty = true;
  for (char c : name) {
    if (c == '.') {
      if (segment_empty) return false;
      segment_empty = true;
      continue;
    }
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
    segment_empty = false;
  }
  return !segment_empty;
}

void ModelParams::add(const std::string& name, Tensor value) {
  if (!valid_param_name(name)) throw ConfigError("invalid parameter name '" + name + "'");
  if (!tensors_.emplace(name, std::move(value)).second)
    throw ConfigError("duplicate parameter name '" + name + "'");
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw CheckpointError("missing parameter '" + name + "'");
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw CheckpointError("missing parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

void ModelParams::set_frozen(const std::string& name, bool frozen) {
  if (!contains(name)) throw ConfigError("cannot freeze unknown parameter '" + name + "'");
  if (frozen) frozen_.insert(name);
  else frozen_.erase(name);
}

bool ModelParams::same_schema(const ModelParams& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  auto a = tensors_.begin();
  auto b = other.tensors_.begin();
  for (; a != tensors_.end(); ++a, ++b)
    if (a->first != b->first || a->second.shape() != b->second.shape()) return false;
  return true;
}

void save_params(const ModelParams& params, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw CheckpointError("cannot write parameters " + file.string());
  binary::write_bytes(out, "SKP1");
  for (const auto& [name, t] : params.tensors()) {
    binary::write_u32(out, std::uint32_t(name.size()));
    binary::write_bytes(out, name);
    binary::write_u32(out, std::uint32_t(t.rank()));
    for (std::size_t e : t.shape()) binary::write_u32(out, std::uint32_t(e));
    for (Real v : t.data()) binary::write_f32(out, float(v));
  }
  if (!out) throw CheckpointError("failed writing parameters " + file.string());
}

ModelParams load_params(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CheckpointError("cannot read parameters " + file.string());
  ModelParams params;
  try {
    if (binary::read_bytes(in, 4, "magic") != "SKP1")
      throw CheckpointError(file.string() + " is not an SKP1 parameter file");
    while (in.peek() != std::char_traits<char>::eof()) {
      const std::uint32_t name_len = binary::read_u32(in, "name length");
      if (name_len > 4096) throw CheckpointError("implausible parameter name length in " + file.string());
      const std::string name = binary::read_bytes(in, name_len, "parameter name");
      const std::uint32_t rank = binary::read_u32(in, "rank of " + name);
      if (rank > 8) throw CheckpointError("implausible rank for '" + name + "'");
      Shape shape;
      for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(binary::read_u32(in, "extent of " + name));
      Tensor t(shape);
      for (Real& v : t.data()) v = Real(binary::read_f32(in, "values of " + name));
      params.add(name, std::move(t));
    }
  } catch (const DataError& e) {
    throw CheckpointError(file.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(file.string() + ": " + e.what());
  }
  return params;
}

}  // namespace nmt
