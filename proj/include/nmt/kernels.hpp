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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nmt/tensor.hpp"

/// Dense forward kernels shared by the training graph and the inference
/// path. All reductions run in a fixed left-to-right order so results are
/// bit-reproducible; nothing here keeps state.
namespace nmt::kernels {

inline constexpr Real kLayerNormEps = Real(1e-5);

/// [m x k] * [k x n]. Operands of rank > 2 are viewed as rows() x cols().
Tensor matmul(const Tensor& a, const Tensor& b);
/// a [m x k] times the transpose of b [n x k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// Transpose of a [k x m] times b [k x n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// out += a * b without allocating; out must be [m x n].
void matmul_accumulate(const Tensor& a, const Tensor& b, Tensor& out);

Tensor add(const Tensor& a, const Tensor& b);
void add_into(Tensor& dst, const Tensor& src);
/// Adds a length-cols() vector to every row.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Real sigmoid(Real x);

Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
void log_softmax_inplace(std::span<Real> x);

struct SsruOutput {
  Tensor h;
  Tensor c;
};

/// One SSRU step on batch-major rows: f = sigmoid(x W_f + b_f),
/// c = f * c_prev + (1 - f) * (x W), h = relu(c).
SsruOutput ssru_cell(const Tensor& x, const Tensor& c_prev, const Tensor& w_f, const Tensor& b_f,
                     const Tensor& w);
/// The cell update alone, in place: c = f * c + (1 - f) * u.
void ssru_update(const Tensor& f, const Tensor& u, Tensor& c);

struct LayerNormStats {
  std::vector<Real> mean;
  std::vector<Real> rstd;
};

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  Real eps = kLayerNormEps, LayerNormStats* stats = nullptr);

/// Sinusoidal position table, rows offset..offset+len-1.
Tensor positional_encoding(std::size_t len, std::size_t dim, std::size_t offset = 0);

/// Row layout of a batched attention call: rows are batch-major, i.e. row
/// b*len + t holds position t of sequence b.
struct AttentionShape {
  std::size_t batch = 1;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::size_t heads = 1;
};

struct AttentionResult {
  Tensor output;  // [batch*query_len x d]
  Tensor probs;   // [batch x heads x query_len x key_len]
};

/// Scaled dot-product attention per head on already projected q/k/v.
/// key_mask (optional, batch*key_len entries) marks valid keys with 1;
/// masked keys receive exactly zero weight. causal requires
/// query_len == key_len and forbids attending to later positions.
AttentionResult attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                               const AttentionShape& shape,
                               std::span<const std::uint8_t> key_mask, bool causal);

/// Gradients of attention_core given the saved probabilities.
void attention_core_backward(const Tensor& q, const Tensor& k, const Tensor& v,
                             const Tensor& probs, const Tensor& grad_out,
                             const AttentionShape& shape, Tensor* grad_q, Tensor* grad_k,
                             Tensor* grad_v);

/// Projection weights of one attention block. Matrices are [d_in x d_out].
struct AttentionWeights {
  const Tensor& wq;
  const Tensor& bq;
  const Tensor& wk;
  const Tensor& bk;
  const Tensor& wv;
  const Tensor& bv;
  const Tensor& wo;
  const Tensor& bo;
};

enum class AttentionMask { none, causal };

/// Full multi-head attention on single sequences: project, attend per
/// head, concatenate, project out.
Tensor multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                            const AttentionWeights& weights, std::size_t heads,
                            AttentionMask mask);

}  // namespace nmt::kernels
