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

#include "nmt/model.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <random>

#include "nmt/error.hpp"
#include "nmt/kernels.hpp"

namespace nmt {

namespace {

std::string layer_prefix(const char* side, std::size_t l) {
  return std::string(side) + ".layer" + std::to_string(l) + ".";
}

void add_norm(std::map<std::string, Shape>& s, const std::string& p, std::size_t d) {
  s[p + "gain"] = {d};
  s[p + "bias"] = {d};
}

void add_attention(std::map<std::string, Shape>& s, const std::string& p, std::size_t d) {
  for (const char* m : {"q", "k", "v", "o"}) {
    s[p + "w" + m] = {d, d};
    s[p + "b" + m] = {d};
  }
}

void add_ffn(std::map<std::string, Shape>& s, const std::string& p, std::size_t d, std::size_t ff) {
  s[p + "w1"] = {d, ff};
  s[p + "b1"] = {ff};
  s[p + "w2"] = {ff, d};
  s[p + "b2"] = {d};
}

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

// Rows 0..len-1 of the position table repeated for every sentence.
Tensor tiled_positions(std::size_t batch, std::size_t len, std::size_t dim) {
  const Tensor pos = kernels::positional_encoding(len, dim);
  Tensor out({batch * len, dim});
  for (std::size_t b = 0; b < batch; ++b)
    std::copy(pos.data().begin(), pos.data().end(), out.data().begin() + b * len * dim);
  return out;
}

void check_ids(std::span<const int> ids, std::size_t vocab, const std::string& stream) {
  for (int id : ids)
    if (id < 0 || std::size_t(id) >= vocab)
      throw InputError(stream + " id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(vocab));
}

}  // namespace

std::map<std::string, Shape> parameter_schema(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model;
  std::map<std::string, Shape> s;
  s["encoder.embed.surface"] = {c.source_vocab_size, c.source_surface_dim()};
  for (std::size_t i = 0; i < c.source_factor_specs.size(); ++i)
    s["encoder.embed.factor" + std::to_string(i)] = {c.source_factor_specs[i].vocab_size,
                                                     c.source_factor_specs[i].embed_dim};
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::string p = layer_prefix("encoder", l);
    add_norm(s, p + "attn_norm.", d);
    add_attention(s, p + "attn.", d);
    add_norm(s, p + "ffn_norm.", d);
    add_ffn(s, p + "ffn.", d, c.ff_dim);
  }
  s["decoder.embed.surface"] = {c.target_vocab_size, d};
  for (std::size_t i = 0; i < c.target_factor_specs.size(); ++i) {
    s["decoder.embed.factor" + std::to_string(i)] = {c.target_factor_specs[i].vocab_size, d};
    s["decoder.output.factor" + std::to_string(i) + ".w"] = {d, c.target_factor_specs[i].vocab_size};
    s["decoder.output.factor" + std::to_string(i) + ".b"] = {c.target_factor_specs[i].vocab_size};
  }
  for (std::size_t l = 0; l < c.decoder_layers; ++l) {
    const std::string p = layer_prefix("decoder", l);
    if (c.decoder_kind == DecoderKind::self_attention) {
      add_norm(s, p + "self_norm.", d);
      add_attention(s, p + "self_attn.", d);
    } else {
      add_norm(s, p + "ssru_norm.", d);
      s[p + "ssru.w_f"] = {d, d};
      s[p + "ssru.b_f"] = {d};
      s[p + "ssru.w"] = {d, d};
    }
    add_norm(s, p + "cross_norm.", d);
    add_attention(s, p + "cross_attn.", d);
    add_norm(s, p + "ffn_norm.", d);
    add_ffn(s, p + "ffn.", d, c.ff_dim);
  }
  add_norm(s, "decoder.final_norm.", d);
  s["decoder.output.surface_bias"] = {c.target_vocab_size};
  if (c.nvs_enabled) {
    s["nvs.w"] = {d, c.target_vocab_size};
    s["nvs.b"] = {c.target_vocab_size};
  }
  return s;
}

ModelParams initialize_params(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // Portable uniform in [0, 1): the top 53 bits of one draw.
  auto uniform = [&rng] { return double(rng() >> 11) * 0x1.0p-53; };
  ModelParams params;
  for (const auto& [name, shape] : parameter_schema(config)) {
    Tensor t(shape);
    if (shape.size() == 2) {
      const double limit = std::sqrt(6.0 / double(shape[0] + shape[1]));
      for (Real& v : t.data()) v = Real((2 * uniform() - 1) * limit);
    } else if (name.ends_with(".gain")) {
      t.fill(Real(1));
    }
    params.add(name, std::move(t));
  }
  return params;
}

Var ParamBinding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Var v = tape_.external(params_.at(name), trainable_ && !params_.frozen(name));
  bound_.emplace(name, v);
  return v;
}

Model::Model(ModelConfig config, ModelParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  const auto schema = parameter_schema(config_);
  for (const auto& [name, shape] : schema) {
    if (!params_.contains(name)) throw ConfigError("missing parameter " + name);
    if (params_.at(name).shape() != shape)
      throw ConfigError("parameter " + name + " has shape " + shape_string(params_.at(name).shape()) +
                        ", configuration expects " + shape_string(shape));
  }
  for (const auto& [name, tensor] : params_.tensors())
    if (!schema.count(name)) throw ConfigError("parameter " + name + " is not used by the configuration");
}

Model Model::initialize(const ModelConfig& config, std::uint64_t seed) {
  return Model(config, initialize_params(config, seed));
}

namespace {

Var linear(Tape& t, ParamBinding& bind, Var x, const std::string& w, const std::string& b) {
  return ad::add_row(t, ad::matmul(t, x, bind(w)), bind(b));
}

Var norm(Tape& t, ParamBinding& bind, Var x, const std::string& p) {
  return ad::layer_norm(t, x, bind(p + "gain"), bind(p + "bias"));
}

Var attention_block(Tape& t, ParamBinding& bind, const std::string& p, Var query, Var memory,
                    const kernels::AttentionShape& shape, std::vector<std::uint8_t> key_mask,
                    bool causal) {
  const Var q = linear(t, bind, query, p + "wq", p + "bq");
  const Var k = linear(t, bind, memory, p + "wk", p + "bk");
  const Var v = linear(t, bind, memory, p + "wv", p + "bv");
  const Var a = ad::attention(t, q, k, v, shape, std::move(key_mask), causal);
  return linear(t, bind, a, p + "wo", p + "bo");
}

Var ffn_block(Tape& t, ParamBinding& bind, const std::string& p, Var x) {
  return linear(t, bind, ad::relu(t, linear(t, bind, x, p + "w1", p + "b1")), p + "w2", p + "b2");
}

}  // namespace

Var Model::embed_source(Tape& tape, ParamBinding& bind, std::span<const int> ids,
                        std::span<const std::vector<int>> factor_ids, std::size_t batch,
                        std::size_t len) const {
  if (factor_ids.size() != config_.source_factor_specs.size())
    throw InputError("expected " + std::to_string(config_.source_factor_specs.size()) +
                     " source factor streams, got " + std::to_string(factor_ids.size()));
  check_ids(ids, config_.source_vocab_size, "source");
  Var x = ad::gather_rows(tape, bind("encoder.embed.surface"), {ids.begin(), ids.end()});
  if (!factor_ids.empty()) {
    std::vector<Var> parts{x};
    for (std::size_t i = 0; i < factor_ids.size(); ++i) {
      if (factor_ids[i].size() != ids.size())
        throw InputError("source factor stream " + std::to_string(i) + " has " +
                         std::to_string(factor_ids[i].size()) + " ids, surface stream has " +
                         std::to_string(ids.size()));
      check_ids(factor_ids[i], config_.source_factor_specs[i].vocab_size,
                "source factor " + std::to_string(i));
      parts.push_back(ad::gather_rows(tape, bind("encoder.embed.factor" + std::to_string(i)), factor_ids[i]));
    }
    if (config_.source_factor_specs.front().combine == FactorCombine::concat) {
      x = ad::concat_cols(tape, parts);
    } else {
      for (std::size_t i = 1; i < parts.size(); ++i) x = ad::add(tape, x, parts[i]);
    }
  }
  return ad::add(tape, x, tape.constant(tiled_positions(batch, len, config_.d_model)));
}

Var Model::encode(Tape& tape, ParamBinding& bind, Var x, const Batch& batch) const {
  const kernels::AttentionShape shape{batch.size, batch.source_len, batch.source_len, config_.heads};
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = layer_prefix("encoder", l);
    const Var h = norm(tape, bind, x, p + "attn_norm.");
    x = ad::add(tape, x, attention_block(tape, bind, p + "attn.", h, h, shape, batch.source_mask, false));
    x = ad::add(tape, x, ffn_block(tape, bind, p + "ffn.", norm(tape, bind, x, p + "ffn_norm.")));
  }
  return x;
}

Var Model::embed_target(Tape& tape, ParamBinding& bind, const Batch& batch) const {
  check_ids(batch.target_input, config_.target_vocab_size, "target");
  Var x = ad::gather_rows(tape, bind("decoder.embed.surface"), batch.target_input);
  for (std::size_t i = 0; i < config_.target_factor_specs.size(); ++i) {
    check_ids(batch.target_factor_input.at(i), config_.target_factor_specs[i].vocab_size,
              "target factor " + std::to_string(i));
    x = ad::add(tape, x,
                ad::gather_rows(tape, bind("decoder.embed.factor" + std::to_string(i)),
                                batch.target_factor_input[i]));
  }
  return ad::add(tape, x, tape.constant(tiled_positions(batch.size, batch.target_len, config_.d_model)));
}

Var Model::decode(Tape& tape, ParamBinding& bind, Var x, Var memory, const Batch& batch) const {
  const kernels::AttentionShape self{batch.size, batch.target_len, batch.target_len, config_.heads};
  const kernels::AttentionShape cross{batch.size, batch.target_len, batch.source_len, config_.heads};
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    const std::string p = layer_prefix("decoder", l);
    if (config_.decoder_kind == DecoderKind::self_attention) {
      const Var h = norm(tape, bind, x, p + "self_norm.");
      x = ad::add(tape, x, attention_block(tape, bind, p + "self_attn.", h, h, self, {}, true));
    } else {
      const Var h = norm(tape, bind, x, p + "ssru_norm.");
      const Var f = ad::sigmoid(tape, linear(tape, bind, h, p + "ssru.w_f", p + "ssru.b_f"));
      const Var u = ad::matmul(tape, h, bind(p + "ssru.w"));
      const Var c = ad::ssru_scan(tape, f, u, batch.size, batch.target_len);
      x = ad::add(tape, x, ad::relu(tape, c));
    }
    const Var h = norm(tape, bind, x, p + "cross_norm.");
    x = ad::add(tape, x, attention_block(tape, bind, p + "cross_attn.", h, memory, cross, batch.source_mask, false));
    x = ad::add(tape, x, ffn_block(tape, bind, p + "ffn.", norm(tape, bind, x, p + "ffn_norm.")));
  }
  return norm(tape, bind, x, "decoder.final_norm.");
}

ForwardOutputs Model::forward(Tape& tape, ParamBinding& bind, const Batch& batch) const {
  if (batch.target_factor_input.size() != config_.target_factor_specs.size())
    throw InputError("batch has " + std::to_string(batch.target_factor_input.size()) +
                     " target factor streams, model expects " +
                     std::to_string(config_.target_factor_specs.size()));
  ForwardOutputs out;
  const Var src = embed_source(tape, bind, batch.source, batch.source_factors, batch.size, batch.source_len);
  out.encoder_out = encode(tape, bind, src, batch);
  const Var h = decode(tape, bind, embed_target(tape, bind, batch), out.encoder_out, batch);
  const Var logits = ad::scale(tape, ad::matmul_nt(tape, h, bind("decoder.embed.surface")),
                               Real(1) / std::sqrt(Real(config_.d_model)));
  out.surface_logits = ad::add_row(tape, logits, bind("decoder.output.surface_bias"));
  for (std::size_t i = 0; i < config_.target_factor_specs.size(); ++i) {
    const std::string p = "decoder.output.factor" + std::to_string(i) + ".";
    out.factor_logits.push_back(linear(tape, bind, h, p + "w", p + "b"));
  }
  if (config_.nvs_enabled) {
    const Var pooled = ad::max_pool(tape, out.encoder_out, batch.size, batch.source_len, batch.source_mask);
    out.nvs_logits = linear(tape, bind, pooled, "nvs.w", "nvs.b");
  }
  return out;
}

// Inference ---------------------------------------------------------------

Linear::Linear(const Tensor& weight, const Tensor* bias, bool quantize) : weight_(weight) {
  bias_ = bias ? *bias : Tensor({weight.cols()});
  if (quantize) quantized_ = quantize_linear(kernels::transpose(weight), bias_);
}

Tensor Linear::operator()(const Tensor& x) const {
  if (quantized_) return quantized_matmul(x, *quantized_);
  return kernels::add_row(kernels::matmul(x, weight_), bias_);
}

InferenceModel::InferenceModel(const Model& model, Precision precision)
    : config_(model.config()),
      params_(std::make_shared<const ModelParams>(model.params())),
      precision_(precision),
      id_(next_id()) {
  const bool q = precision == Precision::int8;
  const ModelParams& p = *params_;
  auto nrm = [&p](const std::string& prefix) { return Norm{&p.at(prefix + "gain"), &p.at(prefix + "bias")}; };
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    const std::string pre = layer_prefix("encoder", l);
    encoder_.push_back({nrm(pre + "attn_norm."), nrm(pre + "ffn_norm."), attention(pre + "attn.", q),
                        feed_forward(pre + "ffn.", q)});
  }
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    const std::string pre = layer_prefix("decoder", l);
    DecoderLayer layer;
    if (config_.decoder_kind == DecoderKind::self_attention) {
      layer.self_norm = nrm(pre + "self_norm.");
      layer.self_attn = attention(pre + "self_attn.", q);
    } else {
      layer.self_norm = nrm(pre + "ssru_norm.");
      layer.ssru_forget = Linear(p.at(pre + "ssru.w_f"), &p.at(pre + "ssru.b_f"), q);
      layer.ssru_input = Linear(p.at(pre + "ssru.w"), nullptr, q);
    }
    layer.cross_norm = nrm(pre + "cross_norm.");
    layer.cross_attn = attention(pre + "cross_attn.", q);
    layer.ffn_norm = nrm(pre + "ffn_norm.");
    layer.ffn = feed_forward(pre + "ffn.", q);
    decoder_.push_back(std::move(layer));
  }
  for (std::size_t i = 0; i < config_.target_factor_specs.size(); ++i) {
    const std::string pre = "decoder.output.factor" + std::to_string(i) + ".";
    factor_outputs_.emplace_back(p.at(pre + "w"), &p.at(pre + "b"), q);
  }
  if (config_.nvs_enabled) nvs_ = Linear(p.at("nvs.w"), &p.at("nvs.b"), q);

  std::vector<int> all(config_.target_vocab_size);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = int(i);
  full_vocab_ = restrict_vocab(std::move(all));
  positions_ = kernels::positional_encoding(4 * config_.max_seq_len + 16, config_.d_model);
}

InferenceModel::Attention InferenceModel::attention(const std::string& prefix, bool quantize) const {
  const ModelParams& p = *params_;
  auto lin = [&](const char* m) {
    return Linear(p.at(prefix + "w" + m), &p.at(prefix + "b" + m), quantize);
  };
  return {lin("q"), lin("k"), lin("v"), lin("o")};
}

InferenceModel::FeedForward InferenceModel::feed_forward(const std::string& prefix, bool quantize) const {
  const ModelParams& p = *params_;
  return {Linear(p.at(prefix + "w1"), &p.at(prefix + "b1"), quantize),
          Linear(p.at(prefix + "w2"), &p.at(prefix + "b2"), quantize)};
}

Tensor InferenceModel::norm(const Tensor& x, const Norm& n) const {
  return kernels::layer_norm(x, *n.gain, *n.bias);
}

OutputVocab InferenceModel::restrict_vocab(std::vector<int> ids) const {
  const Tensor& emb = params_->at("decoder.embed.surface");
  const Tensor& bias = params_->at("decoder.output.surface_bias");
  const std::size_t d = config_.d_model;
  const Real scale = Real(1) / std::sqrt(Real(d));
  OutputVocab v;
  v.weight = Tensor({d, ids.size()});
  v.bias = Tensor({ids.size()});
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || std::size_t(ids[j]) >= config_.target_vocab_size)
      throw InputError("target id " + std::to_string(ids[j]) + " outside vocabulary");
    if (j > 0 && ids[j] <= ids[j - 1]) throw InputError("restricted vocabulary ids must be sorted and unique");
    for (std::size_t i = 0; i < d; ++i) v.weight.at(i, j) = emb.at(std::size_t(ids[j]), i) * scale;
    v.bias[j] = bias[std::size_t(ids[j])];
  }
  v.ids = std::move(ids);
  return v;
}

Tensor InferenceModel::embed_source(std::span<const int> ids,
                                    std::span<const std::vector<int>> factor_ids) const {
  if (factor_ids.size() != config_.source_factor_specs.size())
    throw InputError("expected " + std::to_string(config_.source_factor_specs.size()) +
                     " source factor streams, got " + std::to_string(factor_ids.size()));
  if (ids.size() > config_.max_seq_len)
    throw InputError("source of " + std::to_string(ids.size()) + " tokens exceeds max_seq_len " +
                     std::to_string(config_.max_seq_len) + "; chunk it first");
  check_ids(ids, config_.source_vocab_size, "source");
  const std::size_t d = config_.d_model;
  const Tensor& surface = params_->at("encoder.embed.surface");
  const std::size_t sd = surface.cols();
  const bool concat = !factor_ids.empty() &&
                      config_.source_factor_specs.front().combine == FactorCombine::concat;
  Tensor out({ids.size(), d});
  for (std::size_t t = 0; t < ids.size(); ++t)
    for (std::size_t i = 0; i < sd; ++i) out.at(t, i) = surface.at(std::size_t(ids[t]), i);
  std::size_t offset = sd;
  for (std::size_t f = 0; f < factor_ids.size(); ++f) {
    if (factor_ids[f].size() != ids.size())
      throw InputError("source factor stream " + std::to_string(f) + " has " +
                       std::to_string(factor_ids[f].size()) + " ids, surface stream has " +
                       std::to_string(ids.size()));
    check_ids(factor_ids[f], config_.source_factor_specs[f].vocab_size, "source factor " + std::to_string(f));
    const Tensor& table = params_->at("encoder.embed.factor" + std::to_string(f));
    const std::size_t fd = table.cols();
    for (std::size_t t = 0; t < ids.size(); ++t) {
      const std::size_t row = std::size_t(factor_ids[f][t]);
      for (std::size_t i = 0; i < fd; ++i) {
        if (concat)
          out.at(t, offset + i) = table.at(row, i);
        else
          out.at(t, i) += table.at(row, i);
      }
    }
    if (concat) offset += fd;
  }
  for (std::size_t t = 0; t < ids.size(); ++t)
    for (std::size_t i = 0; i < d; ++i) out.at(t, i) += positions_.at(t, i);
  return out;
}

Tensor InferenceModel::encode(const Tensor& embedded, std::span<const std::uint8_t> pad_mask) const {
  const std::size_t len = embedded.rows();
  if (len > config_.max_seq_len)
    throw InputError("encoder input of " + std::to_string(len) + " positions exceeds max_seq_len " +
                     std::to_string(config_.max_seq_len));
  const kernels::AttentionShape shape{1, len, len, config_.heads};
  Tensor x = embedded;
  for (const EncoderLayer& layer : encoder_) {
    const Tensor h = norm(x, layer.attn_norm);
    const Tensor q = layer.attn.q(h), k = layer.attn.k(h), v = layer.attn.v(h);
    kernels::add_into(x, layer.attn.o(kernels::attention_core(q, k, v, shape, pad_mask, false).output));
    kernels::add_into(x, layer.ffn.w2(kernels::relu(layer.ffn.w1(norm(x, layer.ffn_norm)))));
  }
  return x;
}

EncoderOutput InferenceModel::prepare(std::span<const int> ids,
                                      std::span<const std::vector<int>> factor_ids) const {
  EncoderOutput out;
  out.states = encode(embed_source(ids, factor_ids));
  for (const DecoderLayer& layer : decoder_) {
    out.cross_keys.push_back(layer.cross_attn.k(out.states));
    out.cross_values.push_back(layer.cross_attn.v(out.states));
  }
  out.model_id = id_;
  out.id = next_id();
  return out;
}

DecoderState InferenceModel::start(const EncoderOutput& encoded) const {
  if (encoded.model_id != id_) throw StateError("encoder output belongs to a different model");
  DecoderState s;
  s.model_id = id_;
  s.encoder_id = encoded.id;
  const std::size_t d = config_.d_model;
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    if (config_.decoder_kind == DecoderKind::self_attention) {
      s.keys.emplace_back(Shape{0, d});
      s.values.emplace_back(Shape{0, d});
    } else {
      s.cells.emplace_back(Shape{1, d});
    }
  }
  return s;
}

Tensor InferenceModel::embed_target(const StepInput& prev, std::size_t step) const {
  if (prev.factors.size() != config_.target_factor_specs.size())
    throw InputError("expected " + std::to_string(config_.target_factor_specs.size()) +
                     " target factors, got " + std::to_string(prev.factors.size()));
  const std::size_t d = config_.d_model;
  check_ids(std::span<const int>(&prev.surface, 1), config_.target_vocab_size, "target");
  const Tensor& emb = params_->at("decoder.embed.surface");
  Tensor out({1, d});
  for (std::size_t i = 0; i < d; ++i) out[i] = emb.at(std::size_t(prev.surface), i);
  for (std::size_t f = 0; f < prev.factors.size(); ++f) {
    check_ids(std::span<const int>(&prev.factors[f], 1), config_.target_factor_specs[f].vocab_size,
              "target factor " + std::to_string(f));
    const Tensor& table = params_->at("decoder.embed.factor" + std::to_string(f));
    for (std::size_t i = 0; i < d; ++i) out[i] += table.at(std::size_t(prev.factors[f]), i);
  }
  const Tensor pos = step < positions_.rows() ? Tensor() : kernels::positional_encoding(1, d, step);
  for (std::size_t i = 0; i < d; ++i) out[i] += step < positions_.rows() ? positions_.at(step, i) : pos[i];
  return out;
}

TargetFactorOutput InferenceModel::decode_step(DecoderState& state, const EncoderOutput& encoded,
                                               const StepInput& prev, const OutputVocab* vocab) const {
  return decode_embedded(state, encoded, embed_target(prev, state.step), vocab);
}

TargetFactorOutput InferenceModel::decode_embedded(DecoderState& state, const EncoderOutput& encoded,
                                                   const Tensor& embedding,
                                                   const OutputVocab* vocab) const {
  if (state.model_id != id_) throw StateError("decoder state belongs to a different model");
  if (state.encoder_id != encoded.id) throw StateError("decoder state belongs to a different source");
  if (encoded.model_id != id_) throw StateError("encoder output belongs to a different model");
  const std::size_t d = config_.d_model;
  if (embedding.size() != d)
    throw DimensionError("decoder input " + shape_string(embedding.shape()) + " for d_model " +
                         std::to_string(d));
  Tensor x = embedding;
  x.reshape({1, d});
  const std::size_t src_len = encoded.states.rows();
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    const DecoderLayer& layer = decoder_[l];
    const Tensor h = norm(x, layer.self_norm);
    if (config_.decoder_kind == DecoderKind::self_attention) {
      Tensor& keys = state.keys[l];
      Tensor& values = state.values[l];
      const Tensor k = layer.self_attn.k(h), v = layer.self_attn.v(h);
      keys.storage().insert(keys.storage().end(), k.data().begin(), k.data().end());
      values.storage().insert(values.storage().end(), v.data().begin(), v.data().end());
      const std::size_t len = keys.storage().size() / d;
      keys.reshape({len, d});
      values.reshape({len, d});
      const kernels::AttentionShape shape{1, 1, len, config_.heads};
      const Tensor a = kernels::attention_core(layer.self_attn.q(h), keys, values, shape, {}, false).output;
      kernels::add_into(x, layer.self_attn.o(a));
    } else {
      const Tensor f = kernels::sigmoid(layer.ssru_forget(h));
      const Tensor u = layer.ssru_input(h);
      Tensor& c = state.cells[l];
      kernels::ssru_update(f, u, c);
      kernels::add_into(x, kernels::relu(c));
    }
    const Tensor hc = norm(x, layer.cross_norm);
    const kernels::AttentionShape cross{1, 1, src_len, config_.heads};
    const Tensor a = kernels::attention_core(layer.cross_attn.q(hc), encoded.cross_keys[l],
                                             encoded.cross_values[l], cross, {}, false).output;
    kernels::add_into(x, layer.cross_attn.o(a));
    kernels::add_into(x, layer.ffn.w2(kernels::relu(layer.ffn.w1(norm(x, layer.ffn_norm)))));
  }
  const ModelParams& p = *params_;
  const Tensor h = kernels::layer_norm(x, p.at("decoder.final_norm.gain"), p.at("decoder.final_norm.bias"));
  const OutputVocab& ov = vocab ? *vocab : full_vocab_;
  TargetFactorOutput out;
  out.surface_logits = kernels::add_row(kernels::matmul(h, ov.weight), ov.bias);
  for (const Linear& f : factor_outputs_) out.factor_logits.push_back(f(h));
  ++state.step;
  return out;
}

Tensor InferenceModel::nvs_logits(const EncoderOutput& encoded) const {
  if (!config_.nvs_enabled) throw CapabilityError("model was built without vocabulary selection");
  const Tensor& s = encoded.states;
  Tensor pooled({1, s.cols()}, -std::numeric_limits<Real>::infinity());
  for (std::size_t t = 0; t < s.rows(); ++t)
    for (std::size_t i = 0; i < s.cols(); ++i) pooled[i] = std::max(pooled[i], s.at(t, i));
  return nvs_(pooled);
}

Tensor InferenceModel::nvs_probabilities(const EncoderOutput& encoded) const {
  return kernels::sigmoid(nvs_logits(encoded));
}

std::vector<int> InferenceModel::nvs_select(const EncoderOutput& encoded, Real threshold,
                                            std::span<const int> always_include) const {
  if (!config_.nvs_enabled) throw CapabilityError("model was built without vocabulary selection");
  if (!(threshold >= Real(0) && threshold <= Real(1)))
    throw InputError("NVS threshold must lie in [0, 1], got " + std::to_string(threshold));
  // Compare in logit space: sigmoid(z) > t <=> z > log(t / (1 - t)), which
  // stays exact at both ends where FP32 sigmoid saturates.
  const Tensor logits = nvs_logits(encoded);
  std::vector<std::uint8_t> keep(config_.target_vocab_size, 0);
  if (threshold < Real(1)) {
    const double cut = threshold == Real(0) ? -std::numeric_limits<double>::infinity()
                                            : std::log(double(threshold) / (1.0 - double(threshold)));
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = double(logits[i]) > cut;
  }
  for (int id : always_include)
    if (id >= 0 && std::size_t(id) < keep.size()) keep[std::size_t(id)] = 1;
  std::vector<int> out;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) out.push_back(int(i));
  return out;
}

}  // namespace nmt
