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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nmt/batch.hpp"
#include "nmt/vocab.hpp"

namespace nmt {

inline constexpr std::uint32_t kShardVersion = 1;

struct PrepareOptions {
  std::filesystem::path source;
  std::filesystem::path target;
  std::vector<std::filesystem::path> source_factors;
  std::vector<std::filesystem::path> target_factors;
  std::filesystem::path output;
  std::size_t num_shards = 1;
  std::uint64_t seed = 13;
  /// Pairs with more surface tokens than this on either side are dropped.
  std::size_t max_len = 95;
  std::size_t min_count = 1;
  std::size_t max_vocab = 0;
  std::size_t workers = 0;  // 0: worker_count()
};

struct ShardInfo {
  std::string file;
  std::size_t sentences = 0;
  std::uint64_t checksum = 0;
};

/// manifest.json of a prepared directory.
struct Manifest {
  std::uint32_t version = kShardVersion;
  std::uint64_t seed = 0;
  std::size_t max_len = 0;
  std::size_t source_factors = 0;
  std::size_t target_factors = 0;
  std::size_t input_pairs = 0;
  std::size_t dropped_pairs = 0;
  std::vector<ShardInfo> shards;

  std::size_t sentences() const;
  /// Checksum of the stream schema and sharding parameters; stored in every
  /// shard header.
  std::uint64_t schema_checksum() const;

  void save(const std::filesystem::path& file) const;
  static Manifest load(const std::filesystem::path& file);
};

/// Shard of a line: a seeded 64-bit mix of the 0-based input line index,
/// reduced modulo num_shards.
std::size_t shard_of(std::uint64_t seed, std::uint64_t line_index, std::size_t num_shards);

/// Reads, filters, encodes and shards a parallel corpus. The directory is
/// assembled under a temporary name and renamed into place only on success;
/// an existing prepared directory at the destination is replaced.
Manifest prepare_shards(const PrepareOptions& options);

/// Reads and verifies one shard file. Throws DataError naming the shard on
/// checksum or format problems.
std::vector<EncodedPair> read_shard(const std::filesystem::path& dir, const Manifest& manifest,
                                    std::size_t shard);

/// Streams batches over a prepared directory, one shard in memory at a time.
/// Shard order and batch order within a shard are shuffled by the epoch
/// seed; within a shard, pairs are grouped by length and packed so a batch
/// holds at most batch_tokens padded target tokens (EOS included), except
/// for a single over-long pair, which forms its own batch.
class ShardIterator {
 public:
  ShardIterator(std::filesystem::path dir, std::size_t batch_tokens, std::uint64_t epoch_seed);

  /// Next batch of pairs, or nullopt at the end of the epoch.
  std::optional<std::vector<EncodedPair>> next();

  const Manifest& manifest() const { return manifest_; }
  std::size_t batches_yielded() const { return yielded_; }
  /// Bytes of id storage held for the loaded shard plus the batch in
  /// flight, and the high-water mark of that figure.
  std::size_t resident_bytes() const { return resident_; }
  std::size_t peak_bytes() const { return peak_; }

 private:
  void load_shard(std::size_t shard);
  void track(std::size_t bytes);

  std::filesystem::path dir_;
  Manifest manifest_;
  std::size_t batch_tokens_;
  std::uint64_t epoch_seed_;
  std::vector<std::size_t> shard_order_;
  std::size_t next_shard_ = 0;
  std::vector<EncodedPair> pairs_;
  std::vector<std::vector<std::size_t>> batches_;
  std::size_t next_batch_ = 0;
  std::size_t shard_bytes_ = 0;
  std::size_t resident_ = 0;
  std::size_t peak_ = 0;
  std::size_t yielded_ = 0;
};

/// Bytes of id storage of a pair.
std::size_t pair_bytes(const EncodedPair& pair);

/// Fisher-Yates with a portable generator; identical on every platform.
void seeded_shuffle(std::vector<std::size_t>& items, std::uint64_t seed);

/// Reads a line-aligned raw parallel corpus (surface and optional factor
/// files) for validation or shortlist building.
std::vector<TokenizedPair> read_parallel(const std::filesystem::path& source,
                                         const std::filesystem::path& target,
                                         const std::vector<std::filesystem::path>& source_factors = {},
                                         const std::vector<std::filesystem::path>& target_factors = {});

}  // namespace nmt
