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

#include "nmt/cost.hpp"

namespace nmt {

StepCost decoder_step_cost(const ModelConfig& c, std::size_t step, std::size_t source_len,
                           std::size_t output_vocab) {
  const std::uint64_t d = c.d_model, L = c.decoder_layers;
  StepCost s;
  if (c.decoder_kind == DecoderKind::self_attention)
    s.self_attention = L * (4 * d * d + 2 * d * (step + 1));
  else
    s.ssru = L * 2 * d * d;
  s.cross_attention = L * (2 * d * d + 2 * d * source_len);
  s.feed_forward = L * 2 * d * c.ff_dim;
  s.output = d * (output_vocab ? output_vocab : c.target_vocab_size);
  for (const auto& f : c.target_factor_specs) s.output += d * f.vocab_size;
  return s;
}

std::uint64_t encoder_cost(const ModelConfig& c, std::size_t source_len) {
  const std::uint64_t d = c.d_model, S = source_len;
  const std::uint64_t layer = 4 * d * d * S + 2 * d * S * S + 2 * d * c.ff_dim * S;
  return c.encoder_layers * layer + c.decoder_layers * 2 * d * d * S;
}

std::uint64_t sentence_cost(const ModelConfig& c, std::size_t source_len, std::size_t output_len) {
  std::uint64_t total = encoder_cost(c, source_len);
  for (std::size_t t = 0; t < output_len; ++t) total += decoder_step_cost(c, t, source_len).total();
  return total;
}

}  // namespace nmt
