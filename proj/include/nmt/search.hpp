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
#include <memory>
#include <vector>

#include "nmt/model.hpp"

namespace nmt {

/// Raw scores of one decoder step: surface logits over the active
/// vocabulary and factor logits for the previously fed token.
struct StepLogits {
  std::vector<Real> surface;
  std::vector<std::vector<Real>> factors;
};

/// One decoding path. Search clones cursors when hypotheses branch, so a
/// cursor owns all of its mutable state.
class SearchCursor {
 public:
  virtual ~SearchCursor() = default;
  virtual std::unique_ptr<SearchCursor> clone() const = 0;
  virtual StepLogits step(const StepInput& prev) = 0;
};

/// Cursor over an InferenceModel and one encoded source.
class ModelCursor final : public SearchCursor {
 public:
  ModelCursor(std::shared_ptr<const InferenceModel> model, std::shared_ptr<const EncoderOutput> encoded,
              std::shared_ptr<const OutputVocab> vocab);
  std::unique_ptr<SearchCursor> clone() const override;
  StepLogits step(const StepInput& prev) override;

 private:
  std::shared_ptr<const InferenceModel> model_;
  std::shared_ptr<const EncoderOutput> encoded_;
  std::shared_ptr<const OutputVocab> vocab_;
  DecoderState state_;
};

/// Everything a search needs about one input.
struct SearchProblem {
  std::unique_ptr<SearchCursor> root;
  /// Sorted target ids the surface scores refer to.
  std::vector<int> vocab;
  /// Vocabulary size of each target factor stream.
  std::vector<std::size_t> factor_vocab_sizes;
  /// Output tokens allowed before EOS is forced.
  std::size_t max_len = 0;
  /// Forced first output tokens (ids in the full target vocabulary).
  std::vector<int> prefix;
  /// Per factor stream: forced factors of output tokens 0, 1, ...
  std::vector<std::vector<int>> prefix_factors;
};

struct SearchOptions {
  std::size_t beam = 5;
  double length_alpha = 1.0;
};

struct Hypothesis {
  /// Surface ids without the final EOS.
  std::vector<int> tokens;
  /// Per factor stream, one id per token.
  std::vector<std::vector<int>> factors;
  /// Sum of the chosen surface log-probabilities, EOS included.
  double log_prob = 0;
  /// log_prob / (tokens + 1)^alpha.
  double score = 0;
  bool finished = false;
  /// EOS was imposed at the length limit.
  bool forced_eos = false;
};

/// Output length limit for a source of the given length.
std::size_t max_output_length(std::size_t source_len);

/// Argmax over a factor distribution. Reserved ids are skipped when the
/// vocabulary has any regular entry; ties go to the lowest id.
int choose_factor(const std::vector<Real>& logits);

/// Index of the largest value, lowest index on ties.
std::size_t argmax(const std::vector<Real>& values);

/// Dedicated single-path search: argmax surface token per step, no beam
/// bookkeeping.
Hypothesis greedy_search(const SearchProblem& problem, double length_alpha = 1.0);

/// Beam search over surface tokens. Candidates are ranked by accumulated
/// log-prob; equal totals fall back to the higher step log-prob, then the
/// lower token id, then the lower parent index. A candidate ending in EOS
/// leaves the beam, which shrinks accordingly.
Hypothesis beam_search(const SearchProblem& problem, const SearchOptions& options);

/// Model-backed problem for an encoded source restricted to `vocab`
/// (sorted; empty for the full vocabulary).
SearchProblem make_search_problem(std::shared_ptr<const InferenceModel> model,
                                  std::shared_ptr<const EncoderOutput> encoded, std::vector<int> vocab,
                                  std::vector<int> prefix = {}, std::vector<std::vector<int>> prefix_factors = {});

}  // namespace nmt
