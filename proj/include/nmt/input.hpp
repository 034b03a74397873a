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
#include <string>
#include <string_view>
#include <vector>

namespace nmt {

struct InputOptions {
  /// Attach the target prefix to every chunk instead of the first only.
  bool prefix_all_chunks = false;
  /// Remove the target prefix from the joined output.
  bool strip_prefix = false;

  bool operator==(const InputOptions&) const = default;
};

/// One tokenized sentence to translate, with optional factors and prefixes.
struct SentenceInput {
  std::vector<std::string> tokens;
  std::vector<std::vector<std::string>> source_factors;
  std::vector<std::string> source_prefix;
  std::vector<std::string> target_prefix;
  std::vector<std::vector<std::string>> target_prefix_factors;
  InputOptions options;

  bool operator==(const SentenceInput&) const = default;
};

/// A plain line is whitespace-tokenized; a line starting with '{' is read
/// as a JSON object with the keys text, source_prefix, target_prefix,
/// target_prefix_factors and source_factors. Anything else (unknown keys,
/// wrong types, factor streams of the wrong length) is an InputError.
SentenceInput parse_input_line(std::string_view line, const InputOptions& options = {});

/// Compact JSON object for an input; parse_input_line inverts it.
std::string input_to_json(const SentenceInput& input);

/// Source prefix followed by the tokens; factor streams get the padding
/// token at prefix positions.
struct SourceSequence {
  std::vector<std::string> tokens;
  std::vector<std::vector<std::string>> factors;
};
SourceSequence full_source(const SentenceInput& input);

/// Splits the tokens into consecutive chunks of at most
/// max_seq_len - |source_prefix| tokens. Every chunk keeps the source
/// prefix; the target prefix and its factors go to the first chunk only
/// unless prefix_all_chunks is set.
std::vector<SentenceInput> chunk_input(const SentenceInput& input, std::size_t max_seq_len);

}  // namespace nmt
