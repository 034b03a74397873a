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

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "nmt/batch.hpp"
#include "nmt/config.hpp"
#include "nmt/tensor.hpp"

namespace nmt::test {

class TempDir {
 public:
  TempDir() {
    std::string pattern = (std::filesystem::temp_directory_path() / "nmt-test-XXXXXX").string();
    if (!::mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_lines(const std::filesystem::path& file, const std::vector<std::string>& lines) {
  std::ofstream out(file, std::ios::binary);
  for (const auto& l : lines) out << l << '\n';
}

inline std::vector<std::string> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

inline std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (Real& v : t.data()) v = Real(u(rng));
  return t;
}

inline ModelConfig tiny_config(DecoderKind kind = DecoderKind::self_attention, std::size_t source_factors = 0,
                               std::size_t target_factors = 0, bool nvs = false) {
  ModelConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.ff_dim = 12;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.decoder_kind = kind;
  c.source_vocab_size = 11;
  c.target_vocab_size = 13;
  for (std::size_t i = 0; i < source_factors; ++i) c.source_factor_specs.push_back({7, 8, FactorCombine::sum});
  for (std::size_t i = 0; i < target_factors; ++i) c.target_factor_specs.push_back({8});
  c.nvs_enabled = nvs;
  c.max_seq_len = 16;
  return c;
}

/// Random pair with regular ids; target factor streams carry the leading SHIFT.
inline EncodedPair random_pair(const ModelConfig& c, std::mt19937_64& rng, std::size_t src_len,
                               std::size_t trg_len) {
  auto id = [&](std::size_t vocab, int reserved) { return int(reserved + rng() % (vocab - std::size_t(reserved))); };
  EncodedPair p;
  for (std::size_t i = 0; i < src_len; ++i) p.source.push_back(id(c.source_vocab_size, 4));
  for (const auto& f : c.source_factor_specs) {
    p.source_factors.emplace_back();
    for (std::size_t i = 0; i < src_len; ++i) p.source_factors.back().push_back(id(f.vocab_size, 4));
  }
  for (std::size_t i = 0; i < trg_len; ++i) p.target.push_back(id(c.target_vocab_size, 4));
  for (const auto& f : c.target_factor_specs) {
    p.target_factors.push_back({kShiftId});
    for (std::size_t i = 0; i < trg_len; ++i) p.target_factors.back().push_back(id(f.vocab_size, 5));
  }
  return p;
}

/// Line-aligned toy corpus with optional factor streams (space-joined).
struct ToyCorpus {
  std::vector<std::string> source, target;
  std::vector<std::vector<std::string>> source_factors, target_factors;

  void write(const std::filesystem::path& dir, const std::string& stem) const {
    write_lines(dir / (stem + ".src"), source);
    write_lines(dir / (stem + ".trg"), target);
    for (std::size_t f = 0; f < source_factors.size(); ++f)
      write_lines(dir / (stem + ".src.f" + std::to_string(f)), source_factors[f]);
    for (std::size_t f = 0; f < target_factors.size(); ++f)
      write_lines(dir / (stem + ".trg.f" + std::to_string(f)), target_factors[f]);
  }
};

/// Target equals source over `words` word types.
inline ToyCorpus copy_corpus(std::size_t n, std::uint64_t seed, std::size_t words = 16, std::size_t max_len = 10) {
  std::mt19937_64 rng(seed);
  ToyCorpus c;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 1 + rng() % max_len;
    std::string line;
    for (std::size_t j = 0; j < len; ++j) line += (j ? " w" : "w") + std::to_string(rng() % words);
    c.source.push_back(line);
    c.target.push_back(line);
  }
  return c;
}

/// Word-for-word translation s{i} -> t{perm(i)} with a case factor on both
/// sides: tokens are lower or title cased at random, and roughly one pair
/// in a hundred is entirely uppercased. The target case copies the source.
inline ToyCorpus case_corpus(std::size_t n, std::uint64_t seed, std::size_t words = 64, std::size_t max_len = 10) {
  std::mt19937_64 perm_rng(7);
  std::vector<std::size_t> perm(words);
  for (std::size_t i = 0; i < words; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), perm_rng);
  std::mt19937_64 rng(seed);
  ToyCorpus c;
  c.source_factors.resize(1);
  c.target_factors.resize(1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 1 + rng() % max_len;
    const bool upper = rng() % 100 == 0;
    std::string s, t, fs;
    for (std::size_t j = 0; j < len; ++j) {
      const std::size_t w = rng() % words;
      const char* kase = upper ? "U" : (rng() % 5 == 0 ? "T" : "L");
      const std::string sep = j ? " " : "";
      s += sep + "s" + std::to_string(w);
      t += sep + "t" + std::to_string(perm[w]);
      fs += sep + kase;
    }
    c.source.push_back(s);
    c.target.push_back(t);
    c.source_factors[0].push_back(fs);
    c.target_factors[0].push_back(fs);
  }
  return c;
}

}  // namespace nmt::test
