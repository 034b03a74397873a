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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nmt/batch.hpp"

namespace nmt {

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kBosToken = "<s>";
inline constexpr std::string_view kEosToken = "</s>";
inline constexpr std::string_view kShiftToken = "<shift>";

/// Splits on runs of ASCII whitespace.
std::vector<std::string> tokenize(std::string_view line);
std::string join_tokens(std::span<const std::string> tokens);

using TokenCounts = std::map<std::string, std::size_t>;

/// Bijective token <-> id map with the reserved ids in front. Target factor
/// vocabularies additionally reserve kShiftId.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(false) {}
  explicit Vocabulary(bool with_shift);

  /// Tokens ordered by descending count, ties by token; tokens seen fewer
  /// than min_count times are dropped, and at most max_size entries in total
  /// (reserved included) are kept when max_size > 0.
  static Vocabulary build(const TokenCounts& counts, std::size_t min_count = 1,
                          std::size_t max_size = 0, bool with_shift = false);

  std::size_t size() const { return tokens_.size(); }
  /// Number of reserved ids at the front.
  std::size_t reserved() const { return reserved_; }
  bool with_shift() const { return reserved_ > std::size_t(kShiftId); }

  bool contains(std::string_view token) const;
  /// kUnkId for unknown tokens.
  int id(std::string_view token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  /// One token per line in id order.
  void save(const std::filesystem::path& file) const;
  static Vocabulary load(const std::filesystem::path& file);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void append(std::string token);

  std::size_t reserved_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Empty corpus -> InputError.
Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_count = 1,
                       std::size_t max_size = 0, bool with_shift = false);

/// All vocabularies of a model: surface and factor streams on both sides.
struct Vocabularies {
  Vocabulary source;
  std::vector<Vocabulary> source_factors;
  Vocabulary target;
  std::vector<Vocabulary> target_factors;

  /// vocab.src, vocab.src.factor{i}, vocab.trg, vocab.trg.factor{i}.
  void save(const std::filesystem::path& dir) const;
  static Vocabularies load(const std::filesystem::path& dir);

  bool operator==(const Vocabularies&) const = default;
};

/// A tokenized sentence pair with its factor streams.
struct TokenizedPair {
  std::vector<std::string> source;
  std::vector<std::vector<std::string>> source_factors;
  std::vector<std::string> target;
  std::vector<std::vector<std::string>> target_factors;
};

/// Encodes a pair and inserts the leading SHIFT label into every target
/// factor stream. Factor streams must match their surface lengths.
EncodedPair encode_pair(const Vocabularies& vocabs, const TokenizedPair& pair);

}  // namespace nmt
