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

#include "nmt/config.hpp"

namespace nmt {

/// Multiply-accumulate counts of one decoder step, split by layer part.
/// Element-wise work (gates, norms, softmax) is not counted.
struct StepCost {
  std::uint64_t self_attention = 0;  // 4 d^2 + 2 d (t + 1) per layer
  std::uint64_t ssru = 0;            // 2 d^2 per layer
  std::uint64_t cross_attention = 0; // 2 d^2 + 2 d S per layer (keys/values cached)
  std::uint64_t feed_forward = 0;    // 2 d ff per layer
  std::uint64_t output = 0;          // d |V| plus d |V_f| per target factor

  std::uint64_t layers() const { return self_attention + ssru + cross_attention + feed_forward; }
  std::uint64_t total() const { return layers() + output; }
};

/// Cost of decoder step `step` (0-based) against a source of source_len
/// positions with an output layer over output_vocab ids (0: the full
/// target vocabulary).
StepCost decoder_step_cost(const ModelConfig& config, std::size_t step, std::size_t source_len,
                           std::size_t output_vocab = 0);

/// Encoder layers over a source plus the per-layer cross-attention key and
/// value projections computed once per sentence.
std::uint64_t encoder_cost(const ModelConfig& config, std::size_t source_len);

/// Encoder plus output_len decoder steps.
std::uint64_t sentence_cost(const ModelConfig& config, std::size_t source_len, std::size_t output_len);

}  // namespace nmt
