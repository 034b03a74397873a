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

#include <algorithm>
#include <map>
#include <random>

#include "nmt/error.hpp"
#include "nmt/shards.hpp"
#include "nmt/vocab.hpp"
#include "support.hpp"

using namespace nmt;
using nmt::test::TempDir;
using nmt::test::ToyCorpus;

namespace fs = std::filesystem;

namespace {

PrepareOptions options_for(const TempDir& dir, const std::string& stem, const ToyCorpus& c, std::size_t shards) {
  c.write(dir.path(), stem);
  PrepareOptions o;
  o.source = dir / (stem + ".src");
  o.target = dir / (stem + ".trg");
  for (std::size_t f = 0; f < c.source_factors.size(); ++f) o.source_factors.push_back(dir / (stem + ".src.f" + std::to_string(f)));
  for (std::size_t f = 0; f < c.target_factors.size(); ++f) o.target_factors.push_back(dir / (stem + ".trg.f" + std::to_string(f)));
  o.output = dir / (stem + ".prepared");
  o.num_shards = shards;
  return o;
}

using Row = std::vector<std::string>;

// Pair rendered back to its token strings: source, target, then factor streams.
Row decode(const Vocabularies& v, const EncodedPair& p) {
  Row r{join_tokens(v.source.decode(p.source)), join_tokens(v.target.decode(p.target))};
  for (std::size_t f = 0; f < p.source_factors.size(); ++f) r.push_back(join_tokens(v.source_factors[f].decode(p.source_factors[f])));
  for (std::size_t f = 0; f < p.target_factors.size(); ++f) {
    std::vector<int> ids(p.target_factors[f].begin() + 1, p.target_factors[f].end());
    r.push_back(join_tokens(v.target_factors[f].decode(ids)));
  }
  return r;
}

std::vector<Row> rows_of(const ToyCorpus& c, std::size_t max_len = 95) {
  std::vector<Row> out;
  for (std::size_t i = 0; i < c.source.size(); ++i) {
    if (tokenize(c.source[i]).size() > max_len || tokenize(c.target[i]).size() > max_len) continue;
    Row r{c.source[i], c.target[i]};
    for (const auto& f : c.source_factors) r.push_back(f[i]);
    for (const auto& f : c.target_factors) r.push_back(f[i]);
    out.push_back(r);
  }
  return out;
}

std::vector<Row> all_shard_rows(const fs::path& dir, std::vector<std::size_t>* counts = nullptr) {
  const Manifest m = Manifest::load(dir / "manifest.json");
  const Vocabularies v = Vocabularies::load(dir);
  std::vector<Row> out;
  for (std::size_t s = 0; s < m.shards.size(); ++s) {
    const auto pairs = read_shard(dir, m, s);
    CHECK(pairs.size() == m.shards[s].sentences);
    if (counts) counts->push_back(pairs.size());
    for (const auto& p : pairs) out.push_back(decode(v, p));
  }
  return out;
}

std::string sentence(std::mt19937_64& rng, std::size_t len) {
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += (i ? " w" : "w") + std::to_string(rng() % 50);
  return s;
}

}  // namespace

TEST_CASE("vocabulary construction") {
  const std::vector<std::vector<std::string>> aab{{"a", "a", "b"}};
  const Vocabulary v = build_vocab(aab);
  CHECK(v.size() == 6);
  CHECK(v.token(kPadId) == kPadToken);
  CHECK(v.token(kUnkId) == kUnkToken);
  CHECK(v.token(kBosId) == kBosToken);
  CHECK(v.token(kEosId) == kEosToken);
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);

  const Vocabulary min2 = build_vocab(aab, 2);
  CHECK_FALSE(min2.contains("b"));
  CHECK(min2.encode(std::vector<std::string>{"b"}) == std::vector<int>{kUnkId});

  const std::vector<std::vector<std::string>> ab{{"b", "a"}};
  const Vocabulary tie = build_vocab(ab);
  CHECK(tie.id("a") < tie.id("b"));

  const Vocabulary factors = build_vocab(ab, 1, 0, true);
  CHECK(factors.token(kShiftId) == kShiftToken);
  CHECK(factors.id("a") == 5);

  CHECK(build_vocab(aab, 1, 5).size() == 5);
  CHECK_THROWS_AS(build_vocab(std::vector<std::vector<std::string>>{}), InputError);

  TempDir dir;
  v.save(dir / "v");
  CHECK(Vocabulary::load(dir / "v") == v);
  CHECK(v.decode(v.encode(std::vector<std::string>{"a", "zz", "b"})) == std::vector<std::string>{"a", "<unk>", "b"});
}

TEST_CASE("one shard keeps the corpus in input order") {
  TempDir dir;
  const ToyCorpus c = nmt::test::case_corpus(50, 1);
  const Manifest m = prepare_shards(options_for(dir, "c", c, 1));
  CHECK(m.shards.size() == 1);
  CHECK(all_shard_rows(dir / "c.prepared") == rows_of(c));
}

TEST_CASE("shards hold exactly the filtered corpus") {
  TempDir dir;
  ToyCorpus c = nmt::test::case_corpus(1000, 2);
  std::vector<std::size_t> counts;
  prepare_shards(options_for(dir, "c", c, 4));
  auto got = all_shard_rows(dir / "c.prepared", &counts);
  CHECK(counts.size() == 4);
  std::size_t total = 0;
  for (std::size_t n : counts) {
    total += n;
    CHECK(n > 0);
  }
  CHECK(total == 1000);
  auto want = rows_of(c);
  std::sort(got.begin(), got.end());
  std::sort(want.begin(), want.end());
  CHECK(got == want);
}

TEST_CASE("shard assignment uses the documented mixing hash") {
  auto mix = [](std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  };
  for (std::uint64_t line = 0; line < 200; ++line)
    CHECK(shard_of(13, line, 7) == mix(13 + 0x9e3779b97f4a7c15ULL * (line + 1)) % 7);

  TempDir dir;
  const ToyCorpus c = nmt::test::copy_corpus(300, 3);
  prepare_shards(options_for(dir, "c", c, 5));
  const Manifest m = Manifest::load(dir / "c.prepared/manifest.json");
  const Vocabularies v = Vocabularies::load(dir / "c.prepared");
  for (std::size_t s = 0; s < 5; ++s) {
    std::vector<std::string> expected;
    for (std::size_t i = 0; i < c.source.size(); ++i)
      if (shard_of(13, i, 5) == s) expected.push_back(c.source[i]);
    std::vector<std::string> got;
    for (const auto& p : read_shard(dir / "c.prepared", m, s)) got.push_back(join_tokens(v.source.decode(p.source)));
    CHECK(got == expected);
  }
}

TEST_CASE("re-running with the same seed is byte-identical") {
  TempDir dir;
  const ToyCorpus c = nmt::test::case_corpus(400, 4);
  PrepareOptions a = options_for(dir, "c", c, 3);
  a.workers = 1;
  PrepareOptions b = a;
  b.output = dir / "again";
  b.workers = 4;
  prepare_shards(a);
  prepare_shards(b);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a.output)) {
    ++files;
    CHECK(nmt::test::read_file(e.path()) == nmt::test::read_file(b.output / e.path().filename()));
  }
  CHECK(files == 3 + 1 + 4);  // shards, manifest, four vocabularies
  PrepareOptions other = a;
  other.output = dir / "other";
  other.seed = 99;
  prepare_shards(other);
  CHECK(nmt::test::read_file(a.output / "shard.00000") != nmt::test::read_file(other.output / "shard.00000"));
}

TEST_CASE("length filter boundary") {
  TempDir dir;
  std::mt19937_64 rng(5);
  ToyCorpus c;
  for (std::size_t len : {94, 95, 96, 95, 1}) {
    c.source.push_back(sentence(rng, len));
    c.target.push_back(sentence(rng, len == 96 ? 3 : len));
  }
  c.source.push_back(sentence(rng, 3));
  c.target.push_back(sentence(rng, 96));
  const Manifest m = prepare_shards(options_for(dir, "c", c, 1));
  CHECK(m.input_pairs == 6);
  CHECK(m.dropped_pairs == 2);
  CHECK(m.max_len == 95);
  std::vector<std::size_t> lengths;
  for (const auto& r : all_shard_rows(dir / "c.prepared")) lengths.push_back(tokenize(r[0]).size());
  CHECK(lengths == std::vector<std::size_t>{94, 95, 95, 1});
}

TEST_CASE("target factors carry the leading SHIFT") {
  TempDir dir;
  const ToyCorpus c = nmt::test::case_corpus(20, 6);
  prepare_shards(options_for(dir, "c", c, 1));
  const Manifest m = Manifest::load(dir / "c.prepared/manifest.json");
  for (const auto& p : read_shard(dir / "c.prepared", m, 0)) {
    REQUIRE(p.target_factors.size() == 1);
    CHECK(p.target_factors[0].size() == p.target.size() + 1);
    CHECK(p.target_factors[0][0] == kShiftId);
    CHECK(p.source_factors[0].size() == p.source.size());
  }
}

TEST_CASE("misaligned inputs fail without leaving output behind") {
  TempDir dir;
  ToyCorpus c = nmt::test::case_corpus(30, 7);
  c.target.pop_back();
  PrepareOptions o = options_for(dir, "c", c, 2);
  try {
    prepare_shards(o);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("30") != std::string::npos);
    CHECK(msg.find("29") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(o.output));
  for (const auto& e : fs::directory_iterator(dir.path())) CHECK(e.path().filename().string().find(".tmp") == std::string::npos);

  ToyCorpus f = nmt::test::case_corpus(10, 8);
  f.source_factors[0][4] = "L";
  PrepareOptions fo = options_for(dir, "f", f, 1);
  try {
    prepare_shards(fo);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 5") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(fo.output));
}

TEST_CASE("a failed rerun keeps the previous output") {
  TempDir dir;
  const ToyCorpus c = nmt::test::copy_corpus(30, 9);
  PrepareOptions o = options_for(dir, "c", c, 2);
  prepare_shards(o);
  const std::string before = nmt::test::read_file(o.output / "shard.00000");
  nmt::test::write_lines(o.target, {"only one line"});
  CHECK_THROWS_AS(prepare_shards(o), DataError);
  CHECK(nmt::test::read_file(o.output / "shard.00000") == before);
}

TEST_CASE("corrupt shards are named") {
  TempDir dir;
  const ToyCorpus c = nmt::test::copy_corpus(40, 10);
  PrepareOptions o = options_for(dir, "c", c, 2);
  const Manifest m = prepare_shards(o);
  std::string bytes = nmt::test::read_file(o.output / "shard.00001");
  bytes[bytes.size() / 2] ^= 0x5a;
  std::ofstream(o.output / "shard.00001", std::ios::binary) << bytes;
  CHECK_NOTHROW(read_shard(o.output, m, 0));
  try {
    read_shard(o.output, m, 1);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("shard.00001") != std::string::npos);
  }
}

TEST_CASE("iteration covers every pair once") {
  TempDir dir;
  const ToyCorpus c = nmt::test::copy_corpus(20, 11);
  prepare_shards(options_for(dir, "c", c, 2));
  for (std::uint64_t seed : {1, 2, 3}) {
    ShardIterator it(dir / "c.prepared", 24, seed);
    const Vocabularies v = Vocabularies::load(dir / "c.prepared");
    std::vector<std::string> seen;
    while (auto batch = it.next()) {
      std::size_t longest = 0;
      for (const auto& p : *batch) longest = std::max(longest, p.target.size() + 1);
      CHECK((batch->size() == 1 || batch->size() * longest <= 24));
      for (const auto& p : *batch) seen.push_back(join_tokens(v.source.decode(p.source)));
    }
    std::vector<std::string> want = c.source;
    std::sort(seen.begin(), seen.end());
    std::sort(want.begin(), want.end());
    CHECK(seen == want);
    CHECK(it.resident_bytes() == 0);
  }
}

TEST_CASE("an over-long pair forms its own batch") {
  TempDir dir;
  ToyCorpus c = nmt::test::copy_corpus(10, 12, 16, 3);
  std::mt19937_64 rng(1);
  c.source.push_back(sentence(rng, 30));
  c.target.push_back(c.source.back());
  prepare_shards(options_for(dir, "c", c, 1));
  ShardIterator it(dir / "c.prepared", 10, 1);
  bool found = false;
  while (auto batch = it.next())
    for (const auto& p : *batch)
      if (p.target.size() == 30) {
        CHECK(batch->size() == 1);
        found = true;
      }
  CHECK(found);
}

TEST_CASE("peak memory is one shard plus one batch") {
  TempDir dir;
  const ToyCorpus c = nmt::test::copy_corpus(800, 13);
  prepare_shards(options_for(dir, "c", c, 8));
  const Manifest m = Manifest::load(dir / "c.prepared/manifest.json");
  std::size_t largest_shard = 0;
  for (std::size_t s = 0; s < 8; ++s) {
    std::size_t bytes = 0;
    for (const auto& p : read_shard(dir / "c.prepared", m, s)) bytes += pair_bytes(p);
    largest_shard = std::max(largest_shard, bytes);
  }
  ShardIterator it(dir / "c.prepared", 64, 1);
  std::size_t largest_batch = 0;
  while (auto batch = it.next()) {
    std::size_t bytes = 0;
    for (const auto& p : *batch) bytes += pair_bytes(p);
    largest_batch = std::max(largest_batch, bytes);
  }
  CHECK(it.peak_bytes() <= largest_shard + largest_batch);
  CHECK(it.peak_bytes() >= largest_shard);
}

TEST_CASE("raw parallel reader") {
  TempDir dir;
  const ToyCorpus c = nmt::test::case_corpus(5, 14);
  c.write(dir.path(), "c");
  const auto pairs = read_parallel(dir / "c.src", dir / "c.trg", {dir / "c.src.f0"}, {dir / "c.trg.f0"});
  REQUIRE(pairs.size() == 5);
  CHECK(join_tokens(pairs[2].source) == c.source[2]);
  CHECK(join_tokens(pairs[2].target_factors[0]) == c.target_factors[0][2]);
}
