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

#include "nmt/translate.hpp"

#include <algorithm>
#include <regex>

#include <json.hpp>

#include "nmt/error.hpp"
#include "nmt/parallel.hpp"

namespace nmt {

namespace fs = std::filesystem;

ModelBundle load_model(const fs::path& dir, const fs::path& params) {
  fs::path file = params;
  if (file.empty()) {
    if (fs::exists(dir / "params.best")) {
      file = dir / "params.best";
    } else {
      static const std::regex numbered(R"(params\.\d+)");
      std::string newest;
      if (fs::is_directory(dir))
        for (const auto& e : fs::directory_iterator(dir)) {
          const std::string name = e.path().filename().string();
          if (std::regex_match(name, numbered) && name > newest) newest = name;
        }
      if (newest.empty()) throw CheckpointError("no parameter file found in " + dir.string());
      file = dir / newest;
    }
  }
  return {Model(load_config(dir / "config"), load_params(file)), Vocabularies::load(dir)};
}

Translator::Translator(const ModelBundle& bundle, TranslateSettings settings)
    : model_(std::make_shared<const InferenceModel>(bundle.model, settings.precision)),
      vocabs_(bundle.vocabs),
      settings_(std::move(settings)) {
  const ModelConfig& c = bundle.model.config();
  if (vocabs_.source.size() != c.source_vocab_size || vocabs_.target.size() != c.target_vocab_size ||
      vocabs_.source_factors.size() != c.source_factor_specs.size() ||
      vocabs_.target_factors.size() != c.target_factor_specs.size())
    throw ConfigError("vocabularies do not match the model configuration");
  if (settings_.shortlist && settings_.nvs_threshold)
    throw ConfigError("use either a lexical shortlist or vocabulary selection, not both");
  if (settings_.nvs_threshold && !c.nvs_enabled)
    throw CapabilityError("model was built without vocabulary selection");
  if (!settings_.greedy && settings_.beam == 0) throw ConfigError("beam size must be at least 1");
}

Hypothesis Translator::search_chunk(const SentenceInput& chunk, std::vector<std::string>* warnings) const {
  const SourceSequence src = full_source(chunk);
  if (src.factors.size() != vocabs_.source_factors.size())
    throw InputError("input has " + std::to_string(src.factors.size()) + " source factor streams, model expects " +
                     std::to_string(vocabs_.source_factors.size()));
  const std::vector<int> ids = vocabs_.source.encode(src.tokens);
  std::vector<std::vector<int>> factor_ids;
  for (std::size_t f = 0; f < src.factors.size(); ++f) factor_ids.push_back(vocabs_.source_factors[f].encode(src.factors[f]));
  auto encoded = std::make_shared<const EncoderOutput>(model_->prepare(ids, factor_ids));

  auto lookup = [warnings](const Vocabulary& v, const std::vector<std::string>& tokens, const std::string& what) {
    std::vector<int> out;
    for (const auto& t : tokens) {
      const int id = v.id(t);
      if (id == kUnkId && t != kUnkToken && warnings)
        warnings->push_back(what + " token '" + t + "' is not in the vocabulary; using " + std::string(kUnkToken));
      out.push_back(id);
    }
    return out;
  };
  std::vector<int> prefix = lookup(vocabs_.target, chunk.target_prefix, "target prefix");
  if (chunk.target_prefix_factors.size() > vocabs_.target_factors.size())
    throw InputError("target prefix factors given for " + std::to_string(chunk.target_prefix_factors.size()) +
                     " streams, model has " + std::to_string(vocabs_.target_factors.size()));
  std::vector<std::vector<int>> prefix_factors;
  for (std::size_t f = 0; f < chunk.target_prefix_factors.size(); ++f)
    prefix_factors.push_back(lookup(vocabs_.target_factors[f], chunk.target_prefix_factors[f], "target prefix factor"));

  std::vector<int> vocab;
  if (settings_.shortlist && settings_.shortlist->k() < model_->config().target_vocab_size) {
    vocab = settings_.shortlist->active_vocab(ids, prefix);
  } else if (settings_.nvs_threshold) {
    std::vector<int> always{kPadId, kUnkId, kEosId};
    always.insert(always.end(), prefix.begin(), prefix.end());
    vocab = model_->nvs_select(*encoded, *settings_.nvs_threshold, always);
  }
  const SearchProblem problem =
      make_search_problem(model_, encoded, std::move(vocab), std::move(prefix), std::move(prefix_factors));
  if (settings_.greedy) return greedy_search(problem, settings_.length_alpha);
  return beam_search(problem, {settings_.beam, settings_.length_alpha});
}

TranslationRecord Translator::translate(const SentenceInput& input) const {
  TranslationRecord rec;
  const auto chunks = chunk_input(input, model_->config().max_seq_len);
  const std::size_t nf = vocabs_.target_factors.size();
  std::vector<std::string> words;
  std::vector<std::vector<std::string>> factors(nf);
  for (const auto& chunk : chunks) {
    Hypothesis h = search_chunk(chunk, &rec.warnings);
    const std::size_t skip =
        input.options.strip_prefix ? std::min(chunk.target_prefix.size(), h.tokens.size()) : 0;
    for (std::size_t i = skip; i < h.tokens.size(); ++i) {
      words.push_back(vocabs_.target.token(h.tokens[i]));
      for (std::size_t f = 0; f < nf; ++f) factors[f].push_back(vocabs_.target_factors[f].token(h.factors[f][i]));
    }
    rec.score += h.score;
    rec.forced_eos = rec.forced_eos || h.forced_eos;
  }
  rec.chunks = chunks.size();
  rec.score /= double(chunks.size());
  rec.text = join_tokens(words);
  for (const auto& f : factors) rec.factors.push_back(join_tokens(f));
  return rec;
}

std::vector<TranslationRecord> Translator::translate_all(std::span<const SentenceInput> inputs) const {
  std::vector<TranslationRecord> out(inputs.size());
  const std::size_t workers = settings_.workers ? settings_.workers : worker_count();
  const std::size_t batch = std::max<std::size_t>(1, settings_.batch_size);
  for (std::size_t start = 0; start < inputs.size(); start += batch) {
    const std::size_t n = std::min(batch, inputs.size() - start);
    parallel_for(
        n,
        [&](std::size_t i) {
          try {
            out[start + i] = translate(inputs[start + i]);
          } catch (const Error& e) {
            out[start + i] = TranslationRecord{};
            out[start + i].error = e.what();
          }
        },
        workers);
  }
  return out;
}

std::vector<TranslationRecord> Translator::translate_lines(std::span<const std::string> lines,
                                                           const InputOptions& options) const {
  std::vector<SentenceInput> inputs(lines.size());
  std::vector<std::string> parse_errors(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      inputs[i] = parse_input_line(lines[i], options);
    } catch (const InputError& e) {
      parse_errors[i] = e.what();
    }
  }
  std::vector<TranslationRecord> out = translate_all(inputs);
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (!parse_errors[i].empty()) {
      out[i] = TranslationRecord{};
      out[i].error = parse_errors[i];
    }
  return out;
}

std::string format_record(const TranslationRecord& r, bool json) {
  if (!json) return r.text;
  nlohmann::ordered_json j;
  j["text"] = r.text;
  j["score"] = r.score;
  j["factors"] = r.factors;
  j["chunks"] = r.chunks;
  if (r.forced_eos) j["forced_eos"] = true;
  return j.dump();
}

}  // namespace nmt
