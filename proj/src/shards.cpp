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

#include "nmt/shards.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "nmt/binary_io.hpp"
#include "nmt/error.hpp"
#include "nmt/parallel.hpp"

namespace nmt {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kEncodeBlock = 1024;

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::vector<std::string> read_lines(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read " + file.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

std::string shard_name(std::size_t i) {
  std::string n = std::to_string(i);
  return "shard." + std::string(n.size() < 5 ? 5 - n.size() : 0, '0') + n;
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read " + file.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& file, const std::string& bytes) {
  std::ofstream out(file, std::ios::binary);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw DataError("failed writing " + file.string());
}

std::vector<std::vector<int>> streams_of(const EncodedPair& p) {
  std::vector<std::vector<int>> s{p.source};
  for (const auto& f : p.source_factors) s.push_back(f);
  s.push_back(p.target);
  for (const auto& f : p.target_factors) s.push_back(f);
  return s;
}

}  // namespace

std::size_t Manifest::sentences() const {
  std::size_t n = 0;
  for (const auto& s : shards) n += s.sentences;
  return n;
}

std::uint64_t Manifest::schema_checksum() const {
  const std::string key = "v" + std::to_string(version) + ";seed=" + std::to_string(seed) +
                          ";max_len=" + std::to_string(max_len) + ";source_factors=" +
                          std::to_string(source_factors) + ";target_factors=" +
                          std::to_string(target_factors) + ";shards=" + std::to_string(shards.size());
  return binary::fnv1a(key);
}

void Manifest::save(const fs::path& file) const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["seed"] = seed;
  j["max_len"] = max_len;
  j["streams"] = {{"source_factors", source_factors}, {"target_factors", target_factors}};
  j["input_pairs"] = input_pairs;
  j["dropped_pairs"] = dropped_pairs;
  j["sentences"] = sentences();
  j["shards"] = nlohmann::ordered_json::array();
  for (const auto& s : shards)
    j["shards"].push_back({{"file", s.file}, {"sentences", s.sentences}, {"checksum", hex64(s.checksum)}});
  write_file(file, j.dump(2) + "\n");
}

Manifest Manifest::load(const fs::path& file) {
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(read_file(file));
    m.version = j.at("version").get<std::uint32_t>();
    if (m.version != kShardVersion)
      throw DataError(file.string() + ": unsupported shard version " + std::to_string(m.version));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.max_len = j.at("max_len").get<std::size_t>();
    m.source_factors = j.at("streams").at("source_factors").get<std::size_t>();
    m.target_factors = j.at("streams").at("target_factors").get<std::size_t>();
    m.input_pairs = j.at("input_pairs").get<std::size_t>();
    m.dropped_pairs = j.at("dropped_pairs").get<std::size_t>();
    for (const auto& s : j.at("shards")) {
      ShardInfo info;
      info.file = s.at("file").get<std::string>();
      info.sentences = s.at("sentences").get<std::size_t>();
      info.checksum = std::stoull(s.at("checksum").get<std::string>(), nullptr, 16);
      m.shards.push_back(std::move(info));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(file.string() + ": malformed manifest: " + e.what());
  } catch (const std::invalid_argument&) {
    throw DataError(file.string() + ": malformed shard checksum");
  }
  return m;
}

std::size_t shard_of(std::uint64_t seed, std::uint64_t line_index, std::size_t num_shards) {
  return std::size_t(mix64(seed + 0x9e3779b97f4a7c15ULL * (line_index + 1)) % num_shards);
}

void seeded_shuffle(std::vector<std::size_t>& items, std::uint64_t seed) {
  std::uint64_t state = seed;
  for (std::size_t i = items.size(); i > 1; --i) {
    state += 0x9e3779b97f4a7c15ULL;
    const std::size_t j = std::size_t(mix64(state) % i);
    std::swap(items[i - 1], items[j]);
  }
}

std::size_t pair_bytes(const EncodedPair& pair) {
  std::size_t n = pair.source.size() + pair.target.size();
  for (const auto& f : pair.source_factors) n += f.size();
  for (const auto& f : pair.target_factors) n += f.size();
  return n * sizeof(int);
}

std::vector<TokenizedPair> read_parallel(const fs::path& source, const fs::path& target,
                                         const std::vector<fs::path>& source_factors,
                                         const std::vector<fs::path>& target_factors) {
  const auto src = read_lines(source);
  const auto trg = read_lines(target);
  if (src.size() != trg.size())
    throw DataError("parallel files are not aligned: " + source.string() + " has " +
                    std::to_string(src.size()) + " lines, " + target.string() + " has " +
                    std::to_string(trg.size()));
  auto factor_lines = [&](const std::vector<fs::path>& files) {
    std::vector<std::vector<std::string>> out;
    for (const auto& f : files) {
      out.push_back(read_lines(f));
      if (out.back().size() != src.size())
        throw DataError("parallel files are not aligned: " + source.string() + " has " +
                        std::to_string(src.size()) + " lines, " + f.string() + " has " +
                        std::to_string(out.back().size()));
    }
    return out;
  };
  const auto sf = factor_lines(source_factors);
  const auto tf = factor_lines(target_factors);
  std::vector<TokenizedPair> pairs(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    TokenizedPair& p = pairs[i];
    p.source = tokenize(src[i]);
    p.target = tokenize(trg[i]);
    for (std::size_t f = 0; f < sf.size(); ++f) {
      p.source_factors.push_back(tokenize(sf[f][i]));
      if (p.source_factors.back().size() != p.source.size())
        throw DataError(source_factors[f].string() + " line " + std::to_string(i + 1) + ": " +
                        std::to_string(p.source_factors.back().size()) + " factors for " +
                        std::to_string(p.source.size()) + " source tokens");
    }
    for (std::size_t f = 0; f < tf.size(); ++f) {
      p.target_factors.push_back(tokenize(tf[f][i]));
      if (p.target_factors.back().size() != p.target.size())
        throw DataError(target_factors[f].string() + " line " + std::to_string(i + 1) + ": " +
                        std::to_string(p.target_factors.back().size()) + " factors for " +
                        std::to_string(p.target.size()) + " target tokens");
    }
  }
  return pairs;
}

Manifest prepare_shards(const PrepareOptions& opt) {
  if (opt.num_shards == 0) throw ConfigError("num_shards must be at least 1");
  const auto pairs = read_parallel(opt.source, opt.target, opt.source_factors, opt.target_factors);

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.source.empty() || p.target.empty()) continue;
    if (p.source.size() > opt.max_len || p.target.size() > opt.max_len) continue;
    kept.push_back(i);
  }
  if (kept.empty()) throw DataError("no sentence pairs left after length filtering");

  auto vocab_of = [&](auto&& tokens_of, bool with_shift) {
    TokenCounts counts;
    for (std::size_t i : kept)
      for (const auto& t : tokens_of(pairs[i])) ++counts[t];
    return Vocabulary::build(counts, opt.min_count, opt.max_vocab, with_shift);
  };
  Vocabularies vocabs;
  vocabs.source = vocab_of([](const TokenizedPair& p) -> const auto& { return p.source; }, false);
  vocabs.target = vocab_of([](const TokenizedPair& p) -> const auto& { return p.target; }, false);
  for (std::size_t f = 0; f < opt.source_factors.size(); ++f)
    vocabs.source_factors.push_back(
        vocab_of([f](const TokenizedPair& p) -> const auto& { return p.source_factors[f]; }, false));
  for (std::size_t f = 0; f < opt.target_factors.size(); ++f)
    vocabs.target_factors.push_back(
        vocab_of([f](const TokenizedPair& p) -> const auto& { return p.target_factors[f]; }, true));

  std::vector<EncodedPair> encoded(kept.size());
  const std::size_t blocks = (kept.size() + kEncodeBlock - 1) / kEncodeBlock;
  parallel_for(
      blocks,
      [&](std::size_t b) {
        const std::size_t end = std::min(kept.size(), (b + 1) * kEncodeBlock);
        for (std::size_t i = b * kEncodeBlock; i < end; ++i) encoded[i] = encode_pair(vocabs, pairs[kept[i]]);
      },
      opt.workers ? opt.workers : worker_count());

  Manifest m;
  m.seed = opt.seed;
  m.max_len = opt.max_len;
  m.source_factors = opt.source_factors.size();
  m.target_factors = opt.target_factors.size();
  m.input_pairs = pairs.size();
  m.dropped_pairs = pairs.size() - kept.size();
  m.shards.resize(opt.num_shards);
  std::vector<std::vector<std::size_t>> members(opt.num_shards);
  for (std::size_t i = 0; i < kept.size(); ++i) members[shard_of(opt.seed, kept[i], opt.num_shards)].push_back(i);

  const fs::path out = fs::absolute(opt.output);
  const fs::path parent = out.parent_path();
  fs::create_directories(parent);
  const fs::path tmp = parent / ("." + out.filename().string() + ".tmp-" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    const std::uint64_t schema = m.schema_checksum();
    std::vector<std::string> files(opt.num_shards);
    parallel_for(
        opt.num_shards,
        [&](std::size_t s) {
          std::ostringstream buf;
          binary::write_bytes(buf, "SKD1");
          binary::write_u32(buf, kShardVersion);
          binary::write_u64(buf, schema);
          binary::write_u64(buf, members[s].size());
          for (std::size_t i : members[s]) {
            const auto streams = streams_of(encoded[i]);
            binary::write_u32(buf, std::uint32_t(streams.size()));
            for (const auto& ids : streams) {
              binary::write_u32(buf, std::uint32_t(ids.size()));
              for (int id : ids) binary::write_u32(buf, std::uint32_t(id));
            }
          }
          files[s] = buf.str();
        },
        opt.workers ? opt.workers : worker_count());
    for (std::size_t s = 0; s < opt.num_shards; ++s) {
      m.shards[s].file = shard_name(s);
      m.shards[s].sentences = members[s].size();
      m.shards[s].checksum = binary::fnv1a(files[s]);
      write_file(tmp / m.shards[s].file, files[s]);
    }
    vocabs.save(tmp);
    m.save(tmp / "manifest.json");
    if (fs::exists(out)) {
      if (!fs::exists(out / "manifest.json") && !fs::is_empty(out))
        throw DataError(out.string() + " exists and is not a prepared data directory");
      fs::remove_all(out);
    }
    fs::rename(tmp, out);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
  return m;
}

std::vector<EncodedPair> read_shard(const fs::path& dir, const Manifest& m, std::size_t shard) {
  const ShardInfo& info = m.shards.at(shard);
  const std::string bytes = read_file(dir / info.file);
  if (binary::fnv1a(bytes) != info.checksum)
    throw DataError("corrupt shard " + info.file + ": checksum mismatch");
  std::istringstream in(bytes);
  std::vector<EncodedPair> out;
  try {
    if (binary::read_bytes(in, 4, "shard magic") != "SKD1") throw DataError("bad magic");
    if (binary::read_u32(in, "shard version") != kShardVersion) throw DataError("unsupported version");
    if (binary::read_u64(in, "schema checksum") != m.schema_checksum())
      throw DataError("written for a different manifest");
    const std::uint64_t records = binary::read_u64(in, "record count");
    if (records != info.sentences) throw DataError("record count disagrees with the manifest");
    const std::size_t streams = 2 + m.source_factors + m.target_factors;
    out.resize(records);
    for (auto& pair : out) {
      if (binary::read_u32(in, "stream count") != streams) throw DataError("wrong stream count");
      auto read_ids = [&in] {
        std::vector<int> ids(binary::read_u32(in, "stream length"));
        for (int& id : ids) id = int(binary::read_u32(in, "token id"));
        return ids;
      };
      pair.source = read_ids();
      for (std::size_t f = 0; f < m.source_factors; ++f) pair.source_factors.push_back(read_ids());
      pair.target = read_ids();
      for (std::size_t f = 0; f < m.target_factors; ++f) pair.target_factors.push_back(read_ids());
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes");
  } catch (const DataError& e) {
    throw DataError("corrupt shard " + info.file + ": " + e.what());
  }
  return out;
}

ShardIterator::ShardIterator(fs::path dir, std::size_t batch_tokens, std::uint64_t epoch_seed)
    : dir_(std::move(dir)),
      manifest_(Manifest::load(dir_ / "manifest.json")),
      batch_tokens_(batch_tokens),
      epoch_seed_(epoch_seed) {
  if (batch_tokens_ == 0) throw ConfigError("batch_tokens must be positive");
  shard_order_.resize(manifest_.shards.size());
  std::iota(shard_order_.begin(), shard_order_.end(), std::size_t(0));
  seeded_shuffle(shard_order_, epoch_seed_);
}

void ShardIterator::track(std::size_t bytes) {
  resident_ = bytes;
  peak_ = std::max(peak_, resident_);
}

void ShardIterator::load_shard(std::size_t shard) {
  pairs_.clear();
  pairs_.shrink_to_fit();
  track(0);
  pairs_ = read_shard(dir_, manifest_, shard);
  shard_bytes_ = 0;
  for (const auto& p : pairs_) shard_bytes_ += pair_bytes(p);
  track(shard_bytes_);

  std::vector<std::size_t> order(pairs_.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    const auto& x = pairs_[a];
    const auto& y = pairs_[b];
    if (x.target.size() != y.target.size()) return x.target.size() < y.target.size();
    return x.source.size() < y.source.size();
  });
  batches_.clear();
  std::vector<std::size_t> current;
  std::size_t longest = 0;
  for (std::size_t i : order) {
    const std::size_t len = pairs_[i].target.size() + 1;
    const std::size_t widest = std::max(longest, len);
    if (!current.empty() && (current.size() + 1) * widest > batch_tokens_) {
      batches_.push_back(std::move(current));
      current.clear();
      longest = 0;
    }
    current.push_back(i);
    longest = std::max(longest, len);
  }
  if (!current.empty()) batches_.push_back(std::move(current));
  std::vector<std::size_t> batch_order(batches_.size());
  std::iota(batch_order.begin(), batch_order.end(), std::size_t(0));
  seeded_shuffle(batch_order, mix64(epoch_seed_ ^ mix64(shard + 1)));
  std::vector<std::vector<std::size_t>> shuffled;
  for (std::size_t b : batch_order) shuffled.push_back(std::move(batches_[b]));
  batches_ = std::move(shuffled);
  next_batch_ = 0;
}

std::optional<std::vector<EncodedPair>> ShardIterator::next() {
  while (next_batch_ >= batches_.size()) {
    if (next_shard_ >= shard_order_.size()) {
      pairs_.clear();
      pairs_.shrink_to_fit();
      batches_.clear();
      track(0);
      return std::nullopt;
    }
    load_shard(shard_order_[next_shard_++]);
  }
  std::vector<EncodedPair> batch;
  std::size_t bytes = 0;
  for (std::size_t i : batches_[next_batch_]) {
    batch.push_back(pairs_[i]);
    bytes += pair_bytes(batch.back());
  }
  ++next_batch_;
  ++yielded_;
  track(shard_bytes_ + bytes);
  return batch;
}

}  // namespace nmt
