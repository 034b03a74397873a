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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nmt/params.hpp"
#include "nmt/tensor.hpp"

namespace nmt {

/// Symmetric per-row INT8 matrix: row r holds round(w_r / scale_r) with
/// scale_r = max_j |w_rj| / 127 (0 for all-zero rows).
struct QuantizedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> values;
  std::vector<Real> scales;

  Tensor dequantize() const;
  bool operator==(const QuantizedMatrix&) const = default;
};

/// A linear layer y = x W^T + b with W stored as [out x in] in INT8.
struct QuantizedLinear {
  QuantizedMatrix weight;
  Tensor bias;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }
};

/// Rounds half away from zero and clamps to [-127, 127].
std::int8_t quantize_value(Real value, Real scale);

QuantizedMatrix quantize_rows(const Tensor& w);

/// w is [out x in]; bias has out entries (or is empty for no bias).
QuantizedLinear quantize_linear(const Tensor& w, const Tensor& bias);

/// Dynamic INT8 product: each row of x is quantized with its own
/// symmetric scale, products accumulate in INT32 and are rescaled by
/// x_scale * w_scale before adding the FP32 bias.
Tensor quantized_matmul(const Tensor& x, const QuantizedLinear& layer);

/// Quantized checkpoint: the SKP1 layout with a dtype byte after each
/// name (0 = FP32 tensor, 1 = INT8 matrix followed by FP32 row scales).
struct QuantizedCheckpoint {
  std::map<std::string, Tensor> fp32;
  std::map<std::string, QuantizedMatrix> int8;
};

void save_quantized_params(const QuantizedCheckpoint& checkpoint, const std::filesystem::path& file);
QuantizedCheckpoint load_quantized_params(const std::filesystem::path& file);

}  // namespace nmt
