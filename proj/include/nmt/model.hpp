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

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nmt/batch.hpp"
#include "nmt/config.hpp"
#include "nmt/params.hpp"
#include "nmt/quant.hpp"
#include "nmt/tape.hpp"

namespace nmt {

/// Every parameter name and shape implied by a configuration.
std::map<std::string, Shape> parameter_schema(const ModelConfig& config);

/// Xavier-uniform matrices (embeddings included), zero biases, unit
/// layer-norm gains. Deterministic in seed.
ModelParams initialize_params(const ModelConfig& config, std::uint64_t seed);

/// Binds parameters to a tape on first use. Frozen parameters (all of
/// them when trainable is false) become leaves without gradients.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ModelParams& params, bool trainable = true)
      : tape_(tape), params_(params), trainable_(trainable) {}
  Var operator()(const std::string& name);
  /// Uses v for name instead of a fresh leaf.
  void bind(const std::string& name, Var v) { bound_[name] = v; }
  const std::map<std::string, Var>& bound() const { return bound_; }

 private:
  Tape& tape_;
  const ModelParams& params_;
  bool trainable_;
  std::map<std::string, Var> bound_;
};

/// Graph handles produced by Model::forward.
struct ForwardOutputs {
  Var encoder_out;                 // [batch*source_len x d]
  Var surface_logits;              // [batch*target_len x V]
  std::vector<Var> factor_logits;  // one [batch*target_len x V_f] per target factor
  Var nvs_logits;                  // [batch x V], invalid when NVS is disabled
};

/// Encoder-decoder transformer with a self-attention or SSRU decoder,
/// source/target factors and an optional vocabulary-selection head.
class Model {
 public:
  /// Throws ConfigError when params do not match the configuration.
  Model(ModelConfig config, ModelParams params);
  static Model initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

  /// Teacher-forced pass over a whole batch.
  ForwardOutputs forward(Tape& tape, ParamBinding& bind, const Batch& batch) const;

  /// Differentiable source embedding: surface plus factors plus positions.
  Var embed_source(Tape& tape, ParamBinding& bind, std::span<const int> ids,
                   std::span<const std::vector<int>> factor_ids, std::size_t batch,
                   std::size_t len) const;

 private:
  Var encode(Tape& tape, ParamBinding& bind, Var x, const Batch& batch) const;
  Var embed_target(Tape& tape, ParamBinding& bind, const Batch& batch) const;
  Var decode(Tape& tape, ParamBinding& bind, Var x, Var memory, const Batch& batch) const;

  ModelConfig config_;
  ModelParams params_;
};

// Inference ---------------------------------------------------------------

enum class Precision {
  fp32,
  /// Accepted as a tag only; weights and arithmetic stay FP32.
  fp16,
  /// Linear layers run through dynamic INT8 quantization.
  int8,
};

/// Inference-time linear layer y = x W + b with W stored [in x out].
class Linear {
 public:
  Linear() = default;
  Linear(const Tensor& weight, const Tensor* bias, bool quantize);
  Tensor operator()(const Tensor& x) const;
  bool quantized() const { return quantized_.has_value(); }

 private:
  Tensor weight_;
  Tensor bias_;
  std::optional<QuantizedLinear> quantized_;
};

/// Source encoding plus the per-decoder-layer cross-attention keys and
/// values, computed once per sentence.
struct EncoderOutput {
  Tensor states;  // [len x d]
  std::vector<Tensor> cross_keys;
  std::vector<Tensor> cross_values;
  std::uint64_t model_id = 0;
  std::uint64_t id = 0;
};

/// Per-hypothesis decoder state. Self-attention layers cache keys and
/// values of all previous steps; SSRU layers keep only the cell state c_t.
struct DecoderState {
  std::uint64_t model_id = 0;
  std::uint64_t encoder_id = 0;
  std::size_t step = 0;
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  std::vector<Tensor> cells;
};

struct TargetFactorOutput {
  Tensor surface_logits;              // [1 x |active vocabulary|]
  std::vector<Tensor> factor_logits;  // one [1 x V_f] per target factor
};

/// Decoder input at one step: the previous surface token and its factors.
struct StepInput {
  int surface = kBosId;
  std::vector<int> factors;
};

/// Output projection restricted to a sorted set of target ids.
struct OutputVocab {
  std::vector<int> ids;
  Tensor weight;  // [d x |ids|], already scaled
  Tensor bias;    // [|ids|]
};

/// Read-only inference view of a Model, optionally with INT8 linear
/// layers. Safe to share between threads; all mutable state lives in
/// DecoderState.
class InferenceModel {
 public:
  explicit InferenceModel(const Model& model, Precision precision = Precision::fp32);

  const ModelConfig& config() const { return config_; }
  Precision precision() const { return precision_; }
  std::uint64_t id() const { return id_; }

  /// Surface embedding combined with factor embeddings, plus positions.
  Tensor embed_source(std::span<const int> ids, std::span<const std::vector<int>> factor_ids) const;
  /// Runs the encoder layers; mask entries of 0 mark padding.
  Tensor encode(const Tensor& embedded, std::span<const std::uint8_t> pad_mask = {}) const;
  EncoderOutput prepare(std::span<const int> ids, std::span<const std::vector<int>> factor_ids) const;

  DecoderState start(const EncoderOutput& encoded) const;
  /// Embedding fed to the decoder at `step` for the previous token.
  Tensor embed_target(const StepInput& prev, std::size_t step) const;
  /// One decoder step. Surface logits cover `vocab` (full vocabulary when
  /// null); factor logits describe the token fed in `prev`.
  TargetFactorOutput decode_step(DecoderState& state, const EncoderOutput& encoded,
                                 const StepInput& prev, const OutputVocab* vocab = nullptr) const;
  TargetFactorOutput decode_embedded(DecoderState& state, const EncoderOutput& encoded,
                                     const Tensor& embedding, const OutputVocab* vocab = nullptr) const;

  const OutputVocab& full_vocab() const { return full_vocab_; }
  /// ids must be sorted and unique.
  OutputVocab restrict_vocab(std::vector<int> ids) const;

  /// Target ids whose selection probability exceeds threshold, merged with
  /// always_include. Throws CapabilityError when NVS is disabled.
  std::vector<int> nvs_select(const EncoderOutput& encoded, Real threshold,
                              std::span<const int> always_include) const;
  /// Per-target-id selection logits and their sigmoid.
  Tensor nvs_logits(const EncoderOutput& encoded) const;
  Tensor nvs_probabilities(const EncoderOutput& encoded) const;

 private:
  struct Norm {
    const Tensor* gain = nullptr;
    const Tensor* bias = nullptr;
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct FeedForward {
    Linear w1, w2;
  };
  struct EncoderLayer {
    Norm attn_norm, ffn_norm;
    Attention attn;
    FeedForward ffn;
  };
  struct DecoderLayer {
    Norm self_norm, cross_norm, ffn_norm;  // self_norm doubles as the SSRU norm
    Attention self_attn;  // self_attention decoders
    Linear ssru_forget;   // ssru decoders: W_f, b_f
    Linear ssru_input;    // ssru decoders: W (no bias)
    Attention cross_attn;
    FeedForward ffn;
  };

  Tensor norm(const Tensor& x, const Norm& n) const;
  Attention attention(const std::string& prefix, bool quantize) const;
  FeedForward feed_forward(const std::string& prefix, bool quantize) const;

  ModelConfig config_;
  std::shared_ptr<const ModelParams> params_;
  Precision precision_;
  std::uint64_t id_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  std::vector<Linear> factor_outputs_;
  Linear nvs_;
  OutputVocab full_vocab_;
  Tensor positions_;
};

}  // namespace nmt
