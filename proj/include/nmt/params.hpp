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

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt {

/// Dot-separated segments of [a-z0-9_]+.
bool valid_param_name(std::string_view name);

/// Named parameter store with a per-name frozen flag. Iteration order is
/// the lexicographic name order, which fixes checkpoint layout.
class ModelParams {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::map<std::string, Tensor>& tensors() { return tensors_; }
  std::vector<std::string> names() const;
  std::size_t size() const { return tensors_.size(); }
  std::size_t parameter_count() const;

  void set_frozen(const std::string& name, bool frozen);
  bool frozen(const std::string& name) const { return frozen_.count(name) != 0; }
  const std::set<std::string>& frozen_names() const { return frozen_; }
  void clear_frozen() { frozen_.clear(); }

  /// Same names with the same shapes.
  bool same_schema(const ModelParams& other) const;

 private:
  std::map<std::string, Tensor> tensors_;
  std::set<std::string> frozen_;
};

/// "SKP1" parameter file: magic, then per parameter the u32 name length,
/// UTF-8 name, u32 rank, u32 extents and little-endian FP32 values.
void save_params(const ModelParams& params, const std::filesystem::path& file);
ModelParams load_params(const std::filesystem::path& file);

}  // namespace nmt
