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

#include "nmt/batch.hpp"

#include <algorithm>
#include <string>

#include "nmt/error.hpp"

namespace nmt {

Batch make_batch(std::span<const EncodedPair> pairs) {
  if (pairs.empty()) throw InputError("make_batch: no sentence pairs");
  const std::size_t n_sf = pairs.front().source_factors.size();
  const std::size_t n_tf = pairs.front().target_factors.size();
  Batch b;
  b.size = pairs.size();
  for (const EncodedPair& p : pairs) {
    if (p.source.empty()) throw InputError("make_batch: empty source sentence");
    if (p.source_factors.size() != n_sf || p.target_factors.size() != n_tf)
      throw InputError("make_batch: pairs disagree on the number of factor streams");
    for (const auto& f : p.source_factors)
      if (f.size() != p.source.size()) throw InputError("make_batch: source factor length mismatch");
    for (const auto& f : p.target_factors)
      if (f.size() != p.target.size() + 1)
        throw InputError("make_batch: target factor stream must hold SHIFT plus one label per token");
    b.source_len = std::max(b.source_len, p.source.size());
    b.target_len = std::max(b.target_len, p.target.size() + 1);
  }
  const std::size_t S = b.source_len, T = b.target_len;
  b.source.assign(b.size * S, kPadId);
  b.source_mask.assign(b.size * S, 0);
  b.source_factors.assign(n_sf, std::vector<int>(b.size * S, kPadId));
  b.target_input.assign(b.size * T, kPadId);
  b.target_label.assign(b.size * T, kPadId);
  b.target_mask.assign(b.size * T, 0);
  b.target_factor_input.assign(n_tf, std::vector<int>(b.size * T, kPadId));
  b.target_factor_label.assign(n_tf, std::vector<int>(b.size * T, kPadId));
  for (std::size_t i = 0; i < b.size; ++i) {
    const EncodedPair& p = pairs[i];
    for (std::size_t t = 0; t < p.source.size(); ++t) {
      b.source[i * S + t] = p.source[t];
      b.source_mask[i * S + t] = 1;
      for (std::size_t f = 0; f < n_sf; ++f) b.source_factors[f][i * S + t] = p.source_factors[f][t];
    }
    const std::size_t len = p.target.size() + 1;
    for (std::size_t t = 0; t < len; ++t) {
      b.target_input[i * T + t] = t == 0 ? kBosId : p.target[t - 1];
      b.target_label[i * T + t] = t + 1 == len ? kEosId : p.target[t];
      b.target_mask[i * T + t] = 1;
      for (std::size_t f = 0; f < n_tf; ++f) {
        const auto& labels = p.target_factors[f];
        b.target_factor_label[f][i * T + t] = labels[t];
        b.target_factor_input[f][i * T + t] = t == 0 ? kBosId : labels[t - 1];
      }
    }
    b.target_tokens += len;
  }
  return b;
}

}  // namespace nmt
