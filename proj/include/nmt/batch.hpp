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

namespace nmt {

/// Reserved ids, identical in every vocabulary. kShiftId only occurs in
/// target factor streams.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr int kShiftId = 4;

/// One id-encoded sentence pair. Target factor streams are stored
/// time-shifted: a SHIFT label first, then the factor of every target token,
/// so they are one longer than the target.
struct EncodedPair {
  std::vector<int> source;
  std::vector<std::vector<int>> source_factors;
  std::vector<int> target;
  std::vector<std::vector<int>> target_factors;

  bool operator==(const EncodedPair&) const = default;
};

/// Padded, batch-major training batch. Row b*len + t holds position t of
/// sentence b. Decoder inputs start with BOS; labels end with EOS.
struct Batch {
  std::size_t size = 0;
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  std::vector<int> source;
  std::vector<std::vector<int>> source_factors;
  std::vector<std::uint8_t> source_mask;
  std::vector<int> target_input;
  std::vector<int> target_label;
  std::vector<std::vector<int>> target_factor_input;
  std::vector<std::vector<int>> target_factor_label;
  std::vector<std::uint8_t> target_mask;
  /// Non-PAD target labels.
  std::size_t target_tokens = 0;
};

/// Pads and shifts a set of pairs into a Batch. All pairs must carry the
/// same number of source and target factor streams.
Batch make_batch(std::span<const EncodedPair> pairs);

}  // namespace nmt
