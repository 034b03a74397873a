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
#include <string>
#include <string_view>
#include <vector>

namespace nmt {

enum class DecoderKind { self_attention, ssru };
enum class FactorCombine { sum, concat };

std::string_view to_string(DecoderKind kind);
DecoderKind parse_decoder_kind(std::string_view text);
std::string_view to_string(FactorCombine combine);
FactorCombine parse_factor_combine(std::string_view text);

struct SourceFactorSpec {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 0;
  FactorCombine combine = FactorCombine::sum;

  bool operator==(const SourceFactorSpec&) const = default;
};

/// Target factors are always embedded at d_model and summed with the
/// surface embedding so the surface output layer can stay tied.
struct TargetFactorSpec {
  std::size_t vocab_size = 0;

  bool operator==(const TargetFactorSpec&) const = default;
};

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ff_dim = 256;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  DecoderKind decoder_kind = DecoderKind::self_attention;
  std::size_t source_vocab_size = 0;
  std::size_t target_vocab_size = 0;
  std::vector<SourceFactorSpec> source_factor_specs;
  std::vector<TargetFactorSpec> target_factor_specs;
  bool nvs_enabled = false;
  std::size_t max_seq_len = 100;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Width of the surface source embedding (d_model minus concatenated factor dims).
  std::size_t source_surface_dim() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Key-value text, one `key = value` per line; keys are the field names above.
std::string config_to_text(const ModelConfig& config);
ModelConfig config_from_text(std::string_view text);
void save_config(const ModelConfig& config, const std::filesystem::path& file);
ModelConfig load_config(const std::filesystem::path& file);

}  // namespace nmt
