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

#include "nmt/vocab.hpp"

#include <algorithm>
#include <fstream>

#include "nmt/error.hpp"

namespace nmt {

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < line.size()) {
    while (i < line.size() && space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary(bool with_shift) {
  for (std::string_view t : {kPadToken, kUnkToken, kBosToken, kEosToken}) append(std::string(t));
  if (with_shift) append(std::string(kShiftToken));
  reserved_ = tokens_.size();
}

void Vocabulary::append(std::string token) {
  if (index_.count(token)) throw InputError("duplicate vocabulary entry '" + token + "'");
  index_.emplace(token, int(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const TokenCounts& counts, std::size_t min_count, std::size_t max_size,
                             bool with_shift) {
  Vocabulary v(with_shift);
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [token, count] : counts)
    if (count >= min_count && !v.contains(token)) entries.emplace_back(token, count);
  // counts is a std::map, so a stable sort on count keeps lexicographic ties.
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [token, count] : entries) {
    if (max_size > 0 && v.size() >= max_size) break;
    v.append(std::move(token));
  }
  return v;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || std::size_t(id) >= tokens_.size())
    throw InputError("id " + std::to_string(id) + " outside vocabulary of " + std::to_string(tokens_.size()));
  return tokens_[std::size_t(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + file.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw DataError("failed writing vocabulary " + file.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary " + file.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  const bool with_shift = lines.size() > std::size_t(kShiftId) && lines[std::size_t(kShiftId)] == kShiftToken;
  Vocabulary v(with_shift);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i < v.reserved()) {
      if (lines[i] != v.tokens_[i])
        throw DataError(file.string() + ": line " + std::to_string(i + 1) + " must be the reserved token " +
                        v.tokens_[i]);
      continue;
    }
    v.append(lines[i]);
  }
  if (lines.size() < v.reserved()) throw DataError(file.string() + " is missing reserved tokens");
  return v;
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_count,
                       std::size_t max_size, bool with_shift) {
  TokenCounts counts;
  std::size_t tokens = 0;
  for (const auto& sentence : corpus)
    for (const auto& t : sentence) {
      ++counts[t];
      ++tokens;
    }
  if (tokens == 0) throw InputError("cannot build a vocabulary from an empty corpus");
  return Vocabulary::build(counts, min_count, max_size, with_shift);
}

void Vocabularies::save(const std::filesystem::path& dir) const {
  source.save(dir / "vocab.src");
  target.save(dir / "vocab.trg");
  for (std::size_t i = 0; i < source_factors.size(); ++i)
    source_factors[i].save(dir / ("vocab.src.factor" + std::to_string(i)));
  for (std::size_t i = 0; i < target_factors.size(); ++i)
    target_factors[i].save(dir / ("vocab.trg.factor" + std::to_string(i)));
}

Vocabularies Vocabularies::load(const std::filesystem::path& dir) {
  Vocabularies v;
  v.source = Vocabulary::load(dir / "vocab.src");
  v.target = Vocabulary::load(dir / "vocab.trg");
  for (std::size_t i = 0;; ++i) {
    const auto f = dir / ("vocab.src.factor" + std::to_string(i));
    if (!std::filesystem::exists(f)) break;
    v.source_factors.push_back(Vocabulary::load(f));
  }
  for (std::size_t i = 0;; ++i) {
    const auto f = dir / ("vocab.trg.factor" + std::to_string(i));
    if (!std::filesystem::exists(f)) break;
    v.target_factors.push_back(Vocabulary::load(f));
  }
  return v;
}

EncodedPair encode_pair(const Vocabularies& vocabs, const TokenizedPair& pair) {
  if (pair.source_factors.size() != vocabs.source_factors.size() ||
      pair.target_factors.size() != vocabs.target_factors.size())
    throw InputError("pair has " + std::to_string(pair.source_factors.size()) + "/" +
                     std::to_string(pair.target_factors.size()) + " source/target factor streams, expected " +
                     std::to_string(vocabs.source_factors.size()) + "/" +
                     std::to_string(vocabs.target_factors.size()));
  EncodedPair out;
  out.source = vocabs.source.encode(pair.source);
  out.target = vocabs.target.encode(pair.target);
  for (std::size_t i = 0; i < pair.source_factors.size(); ++i) {
    if (pair.source_factors[i].size() != pair.source.size())
      throw InputError("source factor stream " + std::to_string(i) + " has " +
                       std::to_string(pair.source_factors[i].size()) + " tokens, source has " +
                       std::to_string(pair.source.size()));
    out.source_factors.push_back(vocabs.source_factors[i].encode(pair.source_factors[i]));
  }
  for (std::size_t i = 0; i < pair.target_factors.size(); ++i) {
    if (pair.target_factors[i].size() != pair.target.size())
      throw InputError("target factor stream " + std::to_string(i) + " has " +
                       std::to_string(pair.target_factors[i].size()) + " tokens, target has " +
                       std::to_string(pair.target.size()));
    std::vector<int> ids{kShiftId};
    for (int id : vocabs.target_factors[i].encode(pair.target_factors[i])) ids.push_back(id);
    out.target_factors.push_back(std::move(ids));
  }
  return out;
}

}  // namespace nmt
