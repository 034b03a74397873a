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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nmt/input.hpp"
#include "nmt/lexical.hpp"
#include "nmt/model.hpp"
#include "nmt/search.hpp"
#include "nmt/vocab.hpp"

namespace nmt {

/// A trained model with its vocabularies.
struct ModelBundle {
  Model model;
  Vocabularies vocabs;
};

/// Loads `config`, the vocabularies and a parameter file from a model
/// directory. Without an explicit file, params.best is used when present,
/// otherwise the newest params.NNNNN.
ModelBundle load_model(const std::filesystem::path& dir, const std::filesystem::path& params = {});

struct TranslateSettings {
  Precision precision = Precision::fp32;
  bool greedy = false;
  std::size_t beam = 5;
  double length_alpha = 1.0;
  std::shared_ptr<const Shortlist> shortlist;
  std::optional<Real> nvs_threshold;
  /// Sentences handed to the worker pool at a time.
  std::size_t batch_size = 16;
  std::size_t workers = 0;  // 0: worker_count()
};

struct TranslationRecord {
  std::string text;
  double score = 0;
  /// One space-joined string per target factor stream.
  std::vector<std::string> factors;
  std::size_t chunks = 0;
  bool forced_eos = false;
  std::vector<std::string> warnings;
  /// Set when the record failed; other fields are then empty.
  std::string error;
};

class Translator {
 public:
  Translator(const ModelBundle& bundle, TranslateSettings settings);

  /// Chunks, searches every chunk, joins chunk outputs with single spaces
  /// and strips target prefixes when asked.
  TranslationRecord translate(const SentenceInput& input) const;
  /// Per-record errors are reported in the record.
  std::vector<TranslationRecord> translate_all(std::span<const SentenceInput> inputs) const;
  /// Parses and translates raw input lines.
  std::vector<TranslationRecord> translate_lines(std::span<const std::string> lines,
                                                 const InputOptions& options) const;

  const InferenceModel& model() const { return *model_; }
  const Vocabularies& vocabs() const { return vocabs_; }

  /// Search result of one chunk; exposed for tests and benchmarks.
  Hypothesis search_chunk(const SentenceInput& chunk, std::vector<std::string>* warnings = nullptr) const;

 private:
  std::shared_ptr<const InferenceModel> model_;
  Vocabularies vocabs_;
  TranslateSettings settings_;
};

/// Plain text or a JSON object with text, score, factors and chunks.
std::string format_record(const TranslationRecord& record, bool json);

}  // namespace nmt
