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
#include <functional>
#include <span>
#include <vector>

#include "nmt/kernels.hpp"
#include "nmt/tensor.hpp"

namespace nmt {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

/// Records forward kernels and replays their hand-derived gradients in
/// reverse. A node only keeps a backward closure when at least one of its
/// inputs requires a gradient, so subgraphs fed exclusively by frozen
/// parameters and constants are never visited during backward.
///
/// One tape serves one training step on one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A value that never receives a gradient.
  Var constant(Tensor value);
  /// A leaf whose gradient is kept after backward().
  Var leaf(Tensor value, bool requires_grad = true);
  /// A leaf that aliases an external tensor (model parameters). The tensor
  /// must outlive the tape.
  Var external(const Tensor& value, bool requires_grad);

  /// Adds a computed node. The backward closure is dropped when no input
  /// requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  /// Gradient of v after backward(); empty when none flowed to it.
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  /// Zero-initialized gradient buffer for accumulation inside backward closures.
  Tensor& grad_buffer(Var v);

  /// Seeds d(root)/d(root) = 1 (root must be a scalar) and runs every
  /// recorded backward closure in strict reverse order of recording.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  /// Backward closures executed by the last backward() call.
  std::size_t backward_ops() const { return backward_ops_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::size_t backward_ops_ = 0;
};

/// Differentiable operations. Each forwards to the kernels in
/// nmt::kernels and registers its analytic gradient.
namespace ad {

Var matmul(Tape& t, Var a, Var b);
/// a times the transpose of b.
Var matmul_nt(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var a, Var row);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, Real factor);
Var relu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
/// gate * a + (1 - gate) * b, elementwise.
Var gated_mix(Tape& t, Var gate, Var a, Var b);
Var layer_norm(Tape& t, Var x, Var gain, Var bias, Real eps = kernels::kLayerNormEps);
Var softmax(Tape& t, Var x);
/// Rows of table selected by ids.
Var gather_rows(Tape& t, Var table, std::vector<int> ids);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var attention(Tape& t, Var q, Var k, Var v, const kernels::AttentionShape& shape,
              std::vector<std::uint8_t> key_mask, bool causal);
/// Sequential part of the SSRU: c_t = f_t * c_{t-1} + (1 - f_t) * u_t with
/// c_{-1} = 0, over batch-major rows (row b*steps + t).
Var ssru_scan(Tape& t, Var forget, Var candidate, std::size_t batch, std::size_t steps);
/// Max over the valid positions of each sequence: [batch*len x d] -> [batch x d].
Var max_pool(Tape& t, Var x, std::size_t batch, std::size_t len, std::vector<std::uint8_t> mask);
Var sum(Tape& t, Var x);
/// Sum of x * weights elementwise (constant weights), giving a scalar.
Var weighted_sum(Tape& t, Var x, Tensor weights);

/// Label-smoothed cross entropy summed over rows whose target is not
/// ignore_id: sum_r -sum_j q_rj log softmax(logits)_rj with
/// q = (1 - smoothing) onehot + smoothing / V.
Var smoothed_cross_entropy(Tape& t, Var logits, std::vector<int> targets, Real smoothing,
                           int ignore_id);
/// Binary cross entropy with logits summed over all entries.
Var bce_with_logits(Tape& t, Var logits, Tensor targets);

}  // namespace ad
}  // namespace nmt
