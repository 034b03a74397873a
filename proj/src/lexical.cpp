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

#include "nmt/lexical.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "nmt/batch.hpp"
#include "nmt/error.hpp"
#include "nmt/parallel.hpp"

namespace nmt {

double LexicalTable::prob(int source, int target) const {
  auto it = probs_.find(key(source, target));
  return it == probs_.end() ? 0.0 : it->second;
}

const std::vector<std::pair<int, double>>& LexicalTable::row(int source) const {
  static const std::vector<std::pair<int, double>> empty;
  auto it = rows_.find(source);
  return it == rows_.end() ? empty : it->second;
}

std::vector<int> LexicalTable::sources() const {
  std::vector<int> out;
  for (const auto& [s, row] : rows_) out.push_back(s);
  return out;
}

void LexicalTable::set_row(int source, std::vector<std::pair<int, double>> row) {
  for (const auto& [t, p] : this->row(source)) probs_.erase(key(source, t));
  std::sort(row.begin(), row.end());
  for (const auto& [t, p] : row) probs_[key(source, t)] = p;
  if (row.empty())
    rows_.erase(source);
  else
    rows_[source] = std::move(row);
}

std::vector<std::vector<double>> alignment_posteriors(const LexicalTable& table, std::span<const int> source,
                                                      std::span<const int> target, double uniform) {
  const bool init = table.entries() == 0;
  std::vector<std::vector<double>> post(target.size(), std::vector<double>(source.size() + 1));
  for (std::size_t j = 0; j < target.size(); ++j) {
    auto& row = post[j];
    double total = 0;
    for (std::size_t i = 0; i <= source.size(); ++i) {
      const int s = i == 0 ? kNullSource : source[i - 1];
      row[i] = init ? uniform : table.prob(s, target[j]);
      total += row[i];
    }
    for (double& p : row) p = total > 0 ? p / total : 0.0;
  }
  return post;
}

namespace {

double sentence_log_likelihood(const LexicalTable& table, const IdPair& pair, double uniform) {
  const bool init = table.entries() == 0;
  double ll = 0;
  for (int t : pair.second) {
    double sum = init ? uniform : table.prob(kNullSource, t);
    for (int s : pair.first) sum += init ? uniform : table.prob(s, t);
    ll += std::log(sum / double(pair.first.size() + 1));
  }
  return ll;
}

double uniform_prob(std::span<const IdPair> corpus) {
  std::set<int> targets;
  for (const auto& p : corpus) targets.insert(p.second.begin(), p.second.end());
  return 1.0 / double(std::max<std::size_t>(1, targets.size()));
}

double corpus_log_likelihood(const LexicalTable& table, std::span<const IdPair> corpus, double uniform) {
  double ll = 0;
  for (const auto& p : corpus) ll += sentence_log_likelihood(table, p, uniform);
  return ll;
}

using Counts = std::unordered_map<std::uint64_t, double>;

std::uint64_t count_key(int s, int t) { return (std::uint64_t(std::uint32_t(s)) << 32) | std::uint32_t(t); }

}  // namespace

double model1_log_likelihood(const LexicalTable& table, std::span<const IdPair> corpus) {
  return corpus_log_likelihood(table, corpus, uniform_prob(corpus));
}

Model1Result train_model1(std::span<const IdPair> corpus, const Model1Options& opt) {
  std::size_t tokens = 0;
  for (const auto& p : corpus) tokens += p.second.size();
  if (corpus.empty() || tokens == 0) throw InputError("cannot train a lexical model on an empty corpus");
  if (opt.iterations == 0) throw ConfigError("Model 1 needs at least one EM iteration");
  const double uniform = uniform_prob(corpus);
  const std::size_t block = std::max<std::size_t>(1, opt.block_size);
  const std::size_t blocks = (corpus.size() + block - 1) / block;

  Model1Result result;
  result.log_likelihood.push_back(corpus_log_likelihood(result.table, corpus, uniform));
  for (std::size_t it = 0; it < opt.iterations; ++it) {
    std::vector<Counts> partial(blocks);
    parallel_for(
        blocks,
        [&](std::size_t b) {
          Counts& counts = partial[b];
          const std::size_t end = std::min(corpus.size(), (b + 1) * block);
          for (std::size_t n = b * block; n < end; ++n) {
            const auto& [src, trg] = corpus[n];
            const auto post = alignment_posteriors(result.table, src, trg, uniform);
            for (std::size_t j = 0; j < trg.size(); ++j)
              for (std::size_t i = 0; i <= src.size(); ++i)
                counts[count_key(i == 0 ? kNullSource : src[i - 1], trg[j])] += post[j][i];
          }
        },
        opt.workers ? opt.workers : worker_count());

    // Merge in block order, then normalize per source over targets in
    // ascending id order.
    std::map<int, std::map<int, double>> merged;
    for (const Counts& counts : partial) {
      std::vector<std::pair<std::uint64_t, double>> sorted(counts.begin(), counts.end());
      std::sort(sorted.begin(), sorted.end());
      for (const auto& [k, c] : sorted) merged[int(std::int32_t(k >> 32))][int(std::uint32_t(k))] += c;
    }
    LexicalTable next;
    for (const auto& [s, row] : merged) {
      double total = 0;
      for (const auto& [t, c] : row) total += c;
      std::vector<std::pair<int, double>> probs;
      for (const auto& [t, c] : row) {
        const double p = c / total;
        if (p >= opt.prune_below) probs.emplace_back(t, p);
      }
      next.set_row(s, std::move(probs));
    }
    result.table = std::move(next);
    result.log_likelihood.push_back(corpus_log_likelihood(result.table, corpus, uniform));
  }
  return result;
}

void Shortlist::set_row(int source, std::vector<ShortlistEntry> row) { rows_[source] = std::move(row); }

std::vector<int> Shortlist::row(int source) const {
  std::vector<int> out;
  auto it = rows_.find(source);
  if (it != rows_.end())
    for (const auto& e : it->second) out.push_back(e.target);
  return out;
}

std::vector<int> Shortlist::active_vocab(std::span<const int> source_ids, std::span<const int> extra) const {
  std::set<int> ids{kPadId, kUnkId, kEosId};
  for (int s : source_ids) {
    auto it = rows_.find(s);
    if (it == rows_.end()) continue;
    for (const auto& e : it->second) ids.insert(e.target);
  }
  ids.insert(extra.begin(), extra.end());
  return {ids.begin(), ids.end()};
}

void Shortlist::save(const std::filesystem::path& file, const Vocabulary& source, const Vocabulary& target) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write shortlist " + file.string());
  char buf[32];
  for (const auto& [s, row] : rows_) {
    out << source.token(s) << '\t';
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", double(row[i].prob));
      out << (i ? " " : "") << target.token(row[i].target) << ':' << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing shortlist " + file.string());
}

Shortlist Shortlist::load(const std::filesystem::path& file, const Vocabulary& source, const Vocabulary& target) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read shortlist " + file.string());
  Shortlist sl(0);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(file.string() + " line " + std::to_string(line_no) + ": missing tab");
    const std::string src = line.substr(0, tab);
    std::vector<ShortlistEntry> row;
    for (const auto& item : tokenize(std::string_view(line).substr(tab + 1))) {
      const auto colon = item.rfind(':');
      if (colon == std::string::npos || colon == 0)
        throw DataError(file.string() + " line " + std::to_string(line_no) + ": bad entry '" + item + "'");
      const std::string trg = item.substr(0, colon);
      float prob = 0;
      try {
        prob = std::stof(item.substr(colon + 1));
      } catch (const std::exception&) {
        throw DataError(file.string() + " line " + std::to_string(line_no) + ": bad probability in '" + item + "'");
      }
      if (target.contains(trg)) row.push_back({target.id(trg), prob});
    }
    sl.k_ = std::max(sl.k_, row.size());
    if (source.contains(src)) sl.rows_[source.id(src)] = std::move(row);
  }
  return sl;
}

Shortlist extract_shortlist(const LexicalTable& table, std::size_t k) {
  if (k == 0) throw ConfigError("shortlist size k must be at least 1");
  Shortlist sl(k);
  for (int s : table.sources()) {
    if (s == kNullSource) continue;
    std::vector<std::pair<int, double>> row = table.row(s);
    std::stable_sort(row.begin(), row.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (row.size() > k) row.resize(k);
    std::vector<ShortlistEntry> entries;
    for (const auto& [t, p] : row) entries.push_back({t, float(p)});
    sl.set_row(s, std::move(entries));
  }
  return sl;
}

}  // namespace nmt
