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
#include <filesystem>
#include <map>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nmt/vocab.hpp"

namespace nmt {

/// Source id standing for the empty word every target token may align to.
inline constexpr int kNullSource = -1;

/// Sparse lexical translation table p(t|s).
class LexicalTable {
 public:
  double prob(int source, int target) const;
  /// Row of a source id sorted by target id; empty when unseen.
  const std::vector<std::pair<int, double>>& row(int source) const;
  /// Source ids with any mass (kNullSource included), ascending.
  std::vector<int> sources() const;
  std::size_t entries() const { return probs_.size(); }

  void set_row(int source, std::vector<std::pair<int, double>> row);

 private:
  static std::uint64_t key(int s, int t) {
    return (std::uint64_t(std::uint32_t(s)) << 32) | std::uint32_t(t);
  }
  std::map<int, std::vector<std::pair<int, double>>> rows_;
  std::unordered_map<std::uint64_t, double> probs_;
};

using IdPair = std::pair<std::vector<int>, std::vector<int>>;

struct Model1Options {
  std::size_t iterations = 5;
  /// Entries below this are removed after every M-step.
  double prune_below = 1e-9;
  /// E-step work unit. Counts are accumulated per block and merged in block
  /// order, so results do not depend on the number of workers.
  std::size_t block_size = 512;
  std::size_t workers = 0;  // 0: worker_count()
};

struct Model1Result {
  LexicalTable table;
  /// Corpus log-likelihood under the initial table and after every
  /// iteration (iterations + 1 values).
  std::vector<double> log_likelihood;
};

/// IBM Model 1 EM with a NULL source word and uniform initialization.
/// Empty corpus -> InputError.
Model1Result train_model1(std::span<const IdPair> corpus, const Model1Options& options = {});

/// p(a_j = i | s, t) for every target position j (rows) over NULL followed
/// by the source positions (columns). An empty table means uniform.
std::vector<std::vector<double>> alignment_posteriors(const LexicalTable& table, std::span<const int> source,
                                                      std::span<const int> target, double uniform);

/// sum_j log(sum_i p(t_j|s_i) / (|s| + 1)) over the corpus, NULL included.
double model1_log_likelihood(const LexicalTable& table, std::span<const IdPair> corpus);

struct ShortlistEntry {
  int target = 0;
  float prob = 0;

  bool operator==(const ShortlistEntry&) const = default;
};

/// Per-source-id top-k target ids by descending p(t|s).
class Shortlist {
 public:
  static constexpr std::size_t kDefaultK = 200;

  Shortlist() = default;
  explicit Shortlist(std::size_t k) : k_(k) {}

  std::size_t k() const { return k_; }
  const std::map<int, std::vector<ShortlistEntry>>& rows() const { return rows_; }
  void set_row(int source, std::vector<ShortlistEntry> row);
  std::vector<int> row(int source) const;

  /// Sorted union of the rows of the given source ids, the specials (PAD,
  /// UNK, EOS) and extra ids.
  std::vector<int> active_vocab(std::span<const int> source_ids, std::span<const int> extra = {}) const;

  /// `source<TAB>target:prob target:prob ...` with token strings.
  void save(const std::filesystem::path& file, const Vocabulary& source, const Vocabulary& target) const;
  /// Tokens missing from the vocabularies are skipped.
  static Shortlist load(const std::filesystem::path& file, const Vocabulary& source, const Vocabulary& target);

  bool operator==(const Shortlist&) const = default;

 private:
  std::size_t k_ = kDefaultK;
  std::map<int, std::vector<ShortlistEntry>> rows_;
};

/// Rows sorted by descending probability, ties by lower target id,
/// truncated to k; the NULL row is dropped.
Shortlist extract_shortlist(const LexicalTable& table, std::size_t k = Shortlist::kDefaultK);

}  // namespace nmt
