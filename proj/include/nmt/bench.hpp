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
#include <memory>
#include <span>
#include <vector>

#include "nmt/model.hpp"

namespace nmt {

struct BenchOptions {
  bool greedy = true;
  std::size_t beam = 5;
  std::size_t repeats = 1;
};

struct BenchReport {
  std::size_t sentences = 0;
  std::size_t output_tokens = 0;
  double seconds = 0;

  double sentences_per_second() const { return seconds > 0 ? double(sentences) / seconds : 0; }
  double tokens_per_second() const { return seconds > 0 ? double(output_tokens) / seconds : 0; }
  double mean_output_length() const { return sentences ? double(output_tokens) / double(sentences) : 0; }
};

/// Seeded random source sentences over the regular ids of a vocabulary.
std::vector<std::vector<int>> synthetic_sources(std::size_t vocab_size, std::size_t count, std::size_t length,
                                                std::uint64_t seed);

/// Batch-1 decoding of every source, one after the other, timed with a
/// monotonic clock. Source factors, when the model has any, are PAD.
BenchReport benchmark(std::shared_ptr<const InferenceModel> model, std::span<const std::vector<int>> sources,
                      const BenchOptions& options = {});

}  // namespace nmt
