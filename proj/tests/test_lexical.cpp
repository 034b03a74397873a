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

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "nmt/error.hpp"
#include "nmt/lexical.hpp"
#include "support.hpp"

using namespace nmt;

namespace {

// Dense Model 1 EM over small id ranges: t[s+1][t], row 0 is NULL.
std::vector<std::vector<double>> dense_model1(const std::vector<IdPair>& corpus, std::size_t sources,
                                              std::size_t targets, std::size_t iterations) {
  std::set<int> seen;
  for (const auto& p : corpus) seen.insert(p.second.begin(), p.second.end());
  std::vector<std::vector<double>> t(sources + 1, std::vector<double>(targets, 1.0 / double(seen.size())));
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<std::vector<double>> c(sources + 1, std::vector<double>(targets, 0.0));
    for (const auto& [src, trg] : corpus)
      for (int w : trg) {
        double z = t[0][std::size_t(w)];
        for (int s : src) z += t[std::size_t(s) + 1][std::size_t(w)];
        c[0][std::size_t(w)] += t[0][std::size_t(w)] / z;
        for (int s : src) c[std::size_t(s) + 1][std::size_t(w)] += t[std::size_t(s) + 1][std::size_t(w)] / z;
      }
    for (auto& row : c) {
      double total = 0;
      for (double v : row) total += v;
      if (total > 0)
        for (double& v : row) v /= total;
    }
    // Rows never seen keep no mass.
    t = c;
  }
  return t;
}

std::vector<IdPair> random_corpus(std::uint64_t seed, std::size_t n, int sources, int targets) {
  std::mt19937_64 rng(seed);
  std::vector<IdPair> c;
  for (std::size_t i = 0; i < n; ++i) {
    IdPair p;
    const std::size_t ls = 1 + rng() % 5, lt = 1 + rng() % 5;
    for (std::size_t j = 0; j < ls; ++j) p.first.push_back(int(rng() % std::uint64_t(sources)));
    for (std::size_t j = 0; j < lt; ++j) p.second.push_back(int(rng() % std::uint64_t(targets)));
    c.push_back(p);
  }
  return c;
}

}  // namespace

TEST_CASE("single one-word pair") {
  const std::vector<IdPair> corpus{{{5}, {7}}};
  Model1Options o;
  o.iterations = 1;
  const Model1Result r = train_model1(corpus, o);
  // The one target token splits its count evenly between NULL and the word.
  const auto post = alignment_posteriors(LexicalTable{}, corpus[0].first, corpus[0].second, 1.0);
  CHECK(post[0][0] == 0.5);
  CHECK(post[0][1] == 0.5);
  CHECK(r.table.prob(5, 7) == 1.0);
  CHECK(r.table.prob(kNullSource, 7) == 1.0);
  const auto later = alignment_posteriors(r.table, corpus[0].first, corpus[0].second, 1.0);
  CHECK(later[0][1] == 0.5);
}

TEST_CASE("repeated pairs pin the translation") {
  // a=4 b=5, x=6 y=7
  const std::vector<IdPair> corpus{{{4}, {6}}, {{4}, {6}}, {{4}, {6}}, {{4, 5}, {6, 7}}};
  const Model1Result r = train_model1(corpus);
  const auto& row = r.table.row(4);
  REQUIRE_FALSE(row.empty());
  CHECK(r.table.prob(4, 6) > r.table.prob(4, 7));
  const auto oracle = dense_model1(corpus, 8, 8, 5);
  for (int s : {4, 5})
    for (int t : {6, 7}) CHECK(r.table.prob(s, t) == doctest::Approx(oracle[std::size_t(s) + 1][std::size_t(t)]).epsilon(1e-12));
}

TEST_CASE("EM matches a dense oracle and never lowers the likelihood") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto corpus = random_corpus(seed, 40, 9, 11);
    Model1Options o;
    o.iterations = 6;
    o.block_size = 7;
    o.prune_below = 0;
    const Model1Result r = train_model1(corpus, o);
    REQUIRE(r.log_likelihood.size() == 7);
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i) CHECK(r.log_likelihood[i] >= r.log_likelihood[i - 1] - 1e-9);
    CHECK(r.log_likelihood.back() == doctest::Approx(model1_log_likelihood(r.table, corpus)).epsilon(1e-12));
    const auto oracle = dense_model1(corpus, 9, 11, 6);
    for (int s = -1; s < 9; ++s)
      for (int t = 0; t < 11; ++t) CHECK(std::abs(r.table.prob(s, t) - oracle[std::size_t(s + 1)][std::size_t(t)]) < 1e-12);
    for (int s : r.table.sources()) {
      double total = 0;
      for (const auto& [t, p] : r.table.row(s)) {
        CHECK(p >= 0);
        total += p;
      }
      CHECK(std::abs(total - 1) < 1e-6);
    }
  }
}

TEST_CASE("EM results do not depend on worker count or block size") {
  const auto corpus = random_corpus(3, 300, 20, 20);
  Model1Options a, b;
  a.workers = 1;
  a.block_size = 512;
  b.workers = 4;
  b.block_size = 512;
  const auto ra = train_model1(corpus, a), rb = train_model1(corpus, b);
  for (int s : ra.table.sources()) CHECK(ra.table.row(s) == rb.table.row(s));
}

TEST_CASE("empty corpus and zero iterations are rejected") {
  CHECK_THROWS_AS(train_model1(std::vector<IdPair>{}), InputError);
  CHECK_THROWS_AS(train_model1(std::vector<IdPair>{{{4}, {}}}), InputError);
  Model1Options o;
  o.iterations = 0;
  CHECK_THROWS_AS(train_model1(std::vector<IdPair>{{{4}, {5}}}, o), ConfigError);
}

TEST_CASE("shortlist extraction") {
  LexicalTable t;
  t.set_row(4, {{7, 0.1}, {5, 0.7}, {6, 0.2}});
  t.set_row(8, {{9, 0.5}, {6, 0.5}});
  t.set_row(kNullSource, {{5, 1.0}});
  const Shortlist two = extract_shortlist(t, 2);
  CHECK(two.row(4) == std::vector<int>{5, 6});
  CHECK(two.row(8) == std::vector<int>{6, 9});
  CHECK(two.rows().count(kNullSource) == 0);
  const Shortlist all = extract_shortlist(t, 10);
  CHECK(all.row(4) == std::vector<int>{5, 6, 7});
  CHECK(extract_shortlist(t).k() == 200);
  CHECK_THROWS_AS(extract_shortlist(t, 0), ConfigError);
  CHECK(two.active_vocab(std::vector<int>{4, 99}, std::vector<int>{12}) == std::vector<int>{0, 1, 3, 5, 6, 12});
}

TEST_CASE("shortlist rows are prefix-closed in k") {
  const auto r = train_model1(random_corpus(5, 200, 30, 30));
  const Shortlist s5 = extract_shortlist(r.table, 5), s10 = extract_shortlist(r.table, 10);
  for (const auto& [src, row] : s5.rows()) {
    const auto longer = s10.row(src);
    REQUIRE(longer.size() >= row.size());
    for (std::size_t i = 0; i < row.size(); ++i) CHECK(longer[i] == row[i].target);
    for (std::size_t i = 1; i < row.size(); ++i) CHECK(row[i - 1].prob >= row[i].prob);
  }
}

TEST_CASE("shortlist file round trip") {
  nmt::test::TempDir dir;
  TokenCounts sc, tc;
  for (int i = 0; i < 30; ++i) {
    sc["s" + std::to_string(i)] = 1;
    tc["t" + std::to_string(i)] = 1;
  }
  const Vocabulary sv = Vocabulary::build(sc), tv = Vocabulary::build(tc);
  std::vector<IdPair> corpus = random_corpus(6, 200, 30, 30);
  for (auto& [s, t] : corpus) {
    for (int& x : s) x += 4;
    for (int& x : t) x += 4;
  }
  const Shortlist sl = extract_shortlist(train_model1(corpus).table, 8);
  sl.save(dir / "sl", sv, tv);
  const Shortlist back = Shortlist::load(dir / "sl", sv, tv);
  CHECK(back.rows() == sl.rows());
  back.save(dir / "sl2", sv, tv);
  CHECK(nmt::test::read_file(dir / "sl") == nmt::test::read_file(dir / "sl2"));
  const auto first = nmt::test::read_lines(dir / "sl").front();
  CHECK(first.find('\t') != std::string::npos);
  CHECK(first.find(':') != std::string::npos);

  nmt::test::write_lines(dir / "bad", {"s1 t2:0.5"});
  CHECK_THROWS_AS(Shortlist::load(dir / "bad", sv, tv), DataError);
}
