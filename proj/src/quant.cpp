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

#include "nmt/quant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "nmt/binary_io.hpp"
#include "nmt/error.hpp"

namespace nmt {

std::int8_t quantize_value(Real value, Real scale) {
  if (scale == Real(0)) return 0;
  const Real q = std::round(value / scale);
  return static_cast<std::int8_t>(std::clamp(q, Real(-127), Real(127)));
}

Tensor QuantizedMatrix::dequantize() const {
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = Real(values[r * cols + c]) * scales[r];
  return out;
}

QuantizedMatrix quantize_rows(const Tensor& w) {
  if (w.rank() != 2) throw DimensionError("quantize: expected a matrix, got " + shape_string(w.shape()));
  QuantizedMatrix q;
  q.rows = w.rows();
  q.cols = w.cols();
  q.values.resize(w.size());
  q.scales.resize(q.rows);
  for (std::size_t r = 0; r < q.rows; ++r) {
    Real max_abs = 0;
    for (Real v : w.row(r)) max_abs = std::max(max_abs, std::abs(v));
    const Real scale = max_abs / Real(127);
    q.scales[r] = scale;
    for (std::size_t c = 0; c < q.cols; ++c) q.values[r * q.cols + c] = quantize_value(w[r * q.cols + c], scale);
  }
  return q;
}

QuantizedLinear quantize_linear(const Tensor& w, const Tensor& bias) {
  QuantizedLinear layer{quantize_rows(w), bias};
  if (layer.bias.empty()) layer.bias = Tensor({layer.weight.rows});
  if (layer.bias.size() != layer.weight.rows)
    throw DimensionError("quantize_linear: bias of " + std::to_string(layer.bias.size()) +
                         " values for " + std::to_string(layer.weight.rows) + " outputs");
  return layer;
}

namespace {

std::int32_t dot_i8(const std::int8_t* a, const std::int8_t* b, std::size_t n) {
  std::int32_t acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::int32_t(a[i]) * std::int32_t(b[i]);
  return acc;
}

}  // namespace

Tensor quantized_matmul(const Tensor& x, const QuantizedLinear& layer) {
  const std::size_t k = layer.in_dim(), n = layer.out_dim();
  if (x.cols() != k)
    throw DimensionError("quantized_matmul: input " + shape_string(x.shape()) + " for a " +
                         std::to_string(k) + "->" + std::to_string(n) + " layer");
  Tensor out({x.rows(), n});
  std::vector<std::int8_t> qx(k);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    Real max_abs = 0;
    for (Real v : row) max_abs = std::max(max_abs, std::abs(v));
    const Real x_scale = max_abs / Real(127);
    for (std::size_t c = 0; c < k; ++c) qx[c] = quantize_value(row[c], x_scale);
    Real* o = out.data().data() + r * n;
    const std::int8_t* w = layer.weight.values.data();
    for (std::size_t j = 0; j < n; ++j) {
      const std::int32_t acc = dot_i8(qx.data(), w + j * k, k);
      o[j] = Real(acc) * (x_scale * layer.weight.scales[j]) + layer.bias[j];
    }
  }
  return out;
}

void save_quantized_params(const QuantizedCheckpoint& checkpoint, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw CheckpointError("cannot write parameters " + file.string());
  binary::write_bytes(out, "SKP1");
  // Merge both maps in name order so the layout is deterministic.
  auto f = checkpoint.fp32.begin();
  auto q = checkpoint.int8.begin();
  while (f != checkpoint.fp32.end() || q != checkpoint.int8.end()) {
    const bool take_fp32 = q == checkpoint.int8.end() || (f != checkpoint.fp32.end() && f->first < q->first);
    const std::string& name = take_fp32 ? f->first : q->first;
    binary::write_u32(out, std::uint32_t(name.size()));
    binary::write_bytes(out, name);
    if (take_fp32) {
      const Tensor& t = f->second;
      binary::write_u8(out, 0);
      binary::write_u32(out, std::uint32_t(t.rank()));
      for (std::size_t e : t.shape()) binary::write_u32(out, std::uint32_t(e));
      for (Real v : t.data()) binary::write_f32(out, float(v));
      ++f;
    } else {
      const QuantizedMatrix& m = q->second;
      binary::write_u8(out, 1);
      binary::write_u32(out, 2);
      binary::write_u32(out, std::uint32_t(m.rows));
      binary::write_u32(out, std::uint32_t(m.cols));
      for (std::int8_t v : m.values) binary::write_u8(out, static_cast<std::uint8_t>(v));
      for (Real s : m.scales) binary::write_f32(out, float(s));
      ++q;
    }
  }
  if (!out) throw CheckpointError("failed writing parameters " + file.string());
}

QuantizedCheckpoint load_quantized_params(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CheckpointError("cannot read parameters " + file.string());
  QuantizedCheckpoint ckpt;
  try {
    if (binary::read_bytes(in, 4, "magic") != "SKP1")
      throw CheckpointError(file.string() + " is not an SKP1 parameter file");
    while (in.peek() != std::char_traits<char>::eof()) {
      const std::uint32_t name_len = binary::read_u32(in, "name length");
      if (name_len > 4096) throw CheckpointError("implausible parameter name length");
      const std::string name = binary::read_bytes(in, name_len, "parameter name");
      if (!valid_param_name(name)) throw CheckpointError("invalid parameter name '" + name + "'");
      const std::uint8_t dtype = binary::read_u8(in, "dtype of " + name);
      const std::uint32_t rank = binary::read_u32(in, "rank of " + name);
      if (rank > 8) throw CheckpointError("implausible rank for '" + name + "'");
      Shape shape;
      for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(binary::read_u32(in, "extent of " + name));
      if (dtype == 0) {
        Tensor t(shape);
        for (Real& v : t.data()) v = Real(binary::read_f32(in, "values of " + name));
        ckpt.fp32.emplace(name, std::move(t));
      } else if (dtype == 1) {
        if (rank != 2) throw CheckpointError("INT8 parameter '" + name + "' must be a matrix");
        QuantizedMatrix m;
        m.rows = shape[0];
        m.cols = shape[1];
        m.values.resize(m.rows * m.cols);
        for (auto& v : m.values) v = static_cast<std::int8_t>(binary::read_u8(in, "values of " + name));
        m.scales.resize(m.rows);
        for (auto& s : m.scales) s = Real(binary::read_f32(in, "scales of " + name));
        ckpt.int8.emplace(name, std::move(m));
      } else {
        throw CheckpointError("unknown dtype " + std::to_string(dtype) + " for '" + name + "'");
      }
    }
  } catch (const DataError& e) {
    throw CheckpointError(file.string() + ": " + e.what());
  }
  return ckpt;
}

}  // namespace nmt
