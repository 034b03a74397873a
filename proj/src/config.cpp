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

#include "nmt/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "nmt/error.hpp"

namespace nmt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t parse_count(std::string_view key, std::string_view text) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("config key '" + std::string(key) + "': expected a count, got '" +
                      std::string(text) + "'");
  return v;
}

bool parse_flag(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" +
                    std::string(text) + "'");
}

}  // namespace

std::string_view to_string(DecoderKind kind) {
  return kind == DecoderKind::ssru ? "ssru" : "self_attention";
}

DecoderKind parse_decoder_kind(std::string_view text) {
  if (text == "ssru") return DecoderKind::ssru;
  if (text == "self_attention" || text == "transformer") return DecoderKind::self_attention;
  throw ConfigError("unknown decoder kind '" + std::string(text) + "' (ssru|self_attention)");
}

std::string_view to_string(FactorCombine combine) {
  return combine == FactorCombine::concat ? "concat" : "sum";
}

FactorCombine parse_factor_combine(std::string_view text) {
  if (text == "sum") return FactorCombine::sum;
  if (text == "concat") return FactorCombine::concat;
  throw ConfigError("unknown factor combine '" + std::string(text) + "' (sum|concat)");
}

std::size_t ModelConfig::source_surface_dim() const {
  std::size_t concat = 0;
  for (const auto& f : source_factor_specs)
    if (f.combine == FactorCombine::concat) concat += f.embed_dim;
  return concat < d_model ? d_model - concat : 0;
}

void ModelConfig::validate() const {
  if (d_model == 0) throw ConfigError("d_model must be positive");
  if (heads == 0 || d_model % heads != 0)
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by heads " +
                      std::to_string(heads));
  if (ff_dim == 0) throw ConfigError("ff_dim must be positive");
  if (encoder_layers < 1) throw ConfigError("encoder_layers must be at least 1");
  if (decoder_layers < 1) throw ConfigError("decoder_layers must be at least 1");
  if (source_vocab_size < 5) throw ConfigError("source_vocab_size must cover the reserved ids");
  if (target_vocab_size < 5) throw ConfigError("target_vocab_size must cover the reserved ids");
  if (max_seq_len < 1) throw ConfigError("max_seq_len must be positive");
  std::size_t concat = 0;
  bool any_sum = false, any_concat = false;
  for (std::size_t i = 0; i < source_factor_specs.size(); ++i) {
    const auto& f = source_factor_specs[i];
    const std::string name = "source factor " + std::to_string(i);
    if (f.vocab_size < 5) throw ConfigError(name + ": vocab_size must cover the reserved ids");
    if (f.combine == FactorCombine::sum) {
      any_sum = true;
      if (f.embed_dim != d_model)
        throw ConfigError(name + ": sum-combined factor needs embed_dim == d_model (" +
                          std::to_string(d_model) + "), got " + std::to_string(f.embed_dim));
    } else {
      any_concat = true;
      if (f.embed_dim == 0) throw ConfigError(name + ": embed_dim must be positive");
      concat += f.embed_dim;
    }
  }
  if (any_sum && any_concat)
    throw ConfigError("source factors must all use the same combine rule");
  if (any_concat && concat >= d_model)
    throw ConfigError("concatenated factor dims " + std::to_string(concat) +
                      " leave no room for the surface embedding in d_model " + std::to_string(d_model));
  for (std::size_t i = 0; i < target_factor_specs.size(); ++i)
    if (target_factor_specs[i].vocab_size < 5)
      throw ConfigError("target factor " + std::to_string(i) + ": vocab_size must cover the reserved ids");
}

std::string config_to_text(const ModelConfig& c) {
  std::ostringstream out;
  out << "d_model = " << c.d_model << "\n";
  out << "heads = " << c.heads << "\n";
  out << "ff_dim = " << c.ff_dim << "\n";
  out << "encoder_layers = " << c.encoder_layers << "\n";
  out << "decoder_layers = " << c.decoder_layers << "\n";
  out << "decoder_kind = " << to_string(c.decoder_kind) << "\n";
  out << "source_vocab_size = " << c.source_vocab_size << "\n";
  out << "target_vocab_size = " << c.target_vocab_size << "\n";
  out << "source_factor_specs = ";
  for (std::size_t i = 0; i < c.source_factor_specs.size(); ++i) {
    const auto& f = c.source_factor_specs[i];
    out << (i ? "," : "") << f.vocab_size << ":" << f.embed_dim << ":" << to_string(f.combine);
  }
  out << "\n";
  out << "target_factor_specs = ";
  for (std::size_t i = 0; i < c.target_factor_specs.size(); ++i)
    out << (i ? "," : "") << c.target_factor_specs[i].vocab_size;
  out << "\n";
  out << "nvs_enabled = " << (c.nvs_enabled ? "true" : "false") << "\n";
  out << "max_seq_len = " << c.max_seq_len << "\n";
  return out.str();
}

ModelConfig config_from_text(std::string_view text) {
  ModelConfig c;
  std::map<std::string, std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line without '=': " + t);
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (!seen.emplace(key, value).second) throw ConfigError("config key '" + key + "' repeated");
    if (key == "d_model") c.d_model = parse_count(key, value);
    else if (key == "heads") c.heads = parse_count(key, value);
    else if (key == "ff_dim") c.ff_dim = parse_count(key, value);
    else if (key == "encoder_layers") c.encoder_layers = parse_count(key, value);
    else if (key == "decoder_layers") c.decoder_layers = parse_count(key, value);
    else if (key == "decoder_kind") c.decoder_kind = parse_decoder_kind(value);
    else if (key == "source_vocab_size") c.source_vocab_size = parse_count(key, value);
    else if (key == "target_vocab_size") c.target_vocab_size = parse_count(key, value);
    else if (key == "source_factor_specs") {
      c.source_factor_specs.clear();
      for (const std::string& item : split(value, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() != 3)
          throw ConfigError("source factor spec '" + item + "' is not vocab:dim:combine");
        c.source_factor_specs.push_back({parse_count(key, parts[0]), parse_count(key, parts[1]),
                                         parse_factor_combine(parts[2])});
      }
    } else if (key == "target_factor_specs") {
      c.target_factor_specs.clear();
      for (const std::string& item : split(value, ','))
        c.target_factor_specs.push_back({parse_count(key, item)});
    } else if (key == "nvs_enabled") c.nvs_enabled = parse_flag(key, value);
    else if (key == "max_seq_len") c.max_seq_len = parse_count(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  return c;
}

void save_config(const ModelConfig& config, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw CheckpointError("cannot write config " + file.string());
  out << config_to_text(config);
}

ModelConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw CheckpointError("cannot read config " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_text(buf.str());
}

}  // namespace nmt
