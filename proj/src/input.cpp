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

#include "nmt/input.hpp"

#include <json.hpp>

#include "nmt/error.hpp"
#include "nmt/vocab.hpp"

namespace nmt {

namespace {

std::string get_string(const nlohmann::json& j, const std::string& key) {
  if (!j.is_string()) throw InputError("JSON input: \"" + key + "\" must be a string");
  return j.get<std::string>();
}

std::vector<std::vector<std::string>> get_streams(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array()) throw InputError("JSON input: \"" + key + "\" must be a list of strings");
  std::vector<std::vector<std::string>> out;
  for (const auto& s : j) out.push_back(tokenize(get_string(s, key)));
  return out;
}

}  // namespace

SentenceInput parse_input_line(std::string_view line, const InputOptions& options) {
  SentenceInput in;
  in.options = options;
  const auto first = line.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos || line[first] != '{') {
    in.tokens = tokenize(line);
    return in;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed JSON input: ") + e.what());
  }
  if (!j.is_object()) throw InputError("JSON input must be an object");
  if (!j.contains("text")) throw InputError("JSON input is missing \"text\"");
  for (const auto& [key, value] : j.items()) {
    if (key == "text")
      in.tokens = tokenize(get_string(value, key));
    else if (key == "source_prefix")
      in.source_prefix = tokenize(get_string(value, key));
    else if (key == "target_prefix")
      in.target_prefix = tokenize(get_string(value, key));
    else if (key == "target_prefix_factors")
      in.target_prefix_factors = get_streams(value, key);
    else if (key == "source_factors")
      in.source_factors = get_streams(value, key);
    else
      throw InputError("JSON input: unknown key \"" + key + "\"");
  }
  for (std::size_t f = 0; f < in.source_factors.size(); ++f)
    if (in.source_factors[f].size() != in.tokens.size())
      throw InputError("source factor stream " + std::to_string(f) + " has " +
                       std::to_string(in.source_factors[f].size()) + " tokens, text has " +
                       std::to_string(in.tokens.size()));
  return in;
}

std::string input_to_json(const SentenceInput& in) {
  nlohmann::ordered_json j;
  j["text"] = join_tokens(in.tokens);
  if (!in.source_prefix.empty()) j["source_prefix"] = join_tokens(in.source_prefix);
  if (!in.target_prefix.empty()) j["target_prefix"] = join_tokens(in.target_prefix);
  if (!in.target_prefix_factors.empty()) {
    auto& arr = j["target_prefix_factors"] = nlohmann::ordered_json::array();
    for (const auto& s : in.target_prefix_factors) arr.push_back(join_tokens(s));
  }
  if (!in.source_factors.empty()) {
    auto& arr = j["source_factors"] = nlohmann::ordered_json::array();
    for (const auto& s : in.source_factors) arr.push_back(join_tokens(s));
  }
  return j.dump();
}

SourceSequence full_source(const SentenceInput& in) {
  SourceSequence s;
  s.tokens = in.source_prefix;
  s.tokens.insert(s.tokens.end(), in.tokens.begin(), in.tokens.end());
  for (const auto& f : in.source_factors) {
    std::vector<std::string> stream(in.source_prefix.size(), std::string(kPadToken));
    stream.insert(stream.end(), f.begin(), f.end());
    s.factors.push_back(std::move(stream));
  }
  return s;
}

std::vector<SentenceInput> chunk_input(const SentenceInput& in, std::size_t max_seq_len) {
  if (in.tokens.empty()) throw InputError("empty input sentence");
  if (max_seq_len <= in.source_prefix.size())
    throw InputError("source prefix of " + std::to_string(in.source_prefix.size()) +
                     " tokens leaves no room within max_seq_len " + std::to_string(max_seq_len));
  const std::size_t size = max_seq_len - in.source_prefix.size();
  std::vector<SentenceInput> chunks;
  for (std::size_t start = 0; start < in.tokens.size(); start += size) {
    const std::size_t end = std::min(in.tokens.size(), start + size);
    SentenceInput c;
    c.options = in.options;
    c.source_prefix = in.source_prefix;
    c.tokens.assign(in.tokens.begin() + std::ptrdiff_t(start), in.tokens.begin() + std::ptrdiff_t(end));
    for (const auto& f : in.source_factors)
      c.source_factors.emplace_back(f.begin() + std::ptrdiff_t(start), f.begin() + std::ptrdiff_t(end));
    if (start == 0 || in.options.prefix_all_chunks) {
      c.target_prefix = in.target_prefix;
      c.target_prefix_factors = in.target_prefix_factors;
    }
    chunks.push_back(std::move(c));
  }
  return chunks;
}

}  // namespace nmt
