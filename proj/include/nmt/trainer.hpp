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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nmt/batch.hpp"
#include "nmt/model.hpp"
#include "nmt/tape.hpp"

namespace nmt {

struct TrainConfig {
  std::size_t max_updates = 1000;
  std::size_t checkpoint_interval = 500;
  /// Peak learning rate, reached after warmup updates and then decayed with
  /// the inverse square root of the update index.
  double learning_rate = 1e-3;
  std::size_t warmup = 400;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double label_smoothing = 0.1;
  /// Glob patterns over parameter names, or one preset name.
  std::vector<std::string> freeze;
  /// Weight of each target factor stream's loss (default 1).
  std::vector<double> factor_loss_weights;
  double nvs_loss_weight = 1.0;
  std::size_t average_best = 8;
  /// Padded target tokens per batch.
  std::size_t batch_tokens = 1024;
  std::uint64_t seed = 13;
  /// Prepare batches on a background thread (queue of two batches).
  bool prefetch = true;

  void validate() const;
};

double learning_rate_at(const TrainConfig& config, std::size_t update);

struct StreamMetrics {
  double loss = 0;       // smoothed CE per token
  std::size_t correct = 0;
  std::size_t counted = 0;  // tokens counted for accuracy
};

struct LossResult {
  Var loss;  // scalar graph handle
  double value = 0;
  StreamMetrics surface;
  std::vector<StreamMetrics> factors;
  double nvs = 0;  // mean BCE per (sentence, target id)
  std::size_t tokens = 0;
};

/// Bag-of-words NVS targets: one row per sentence with 1 for every target
/// id in its reference, specials excluded.
Tensor nvs_targets(const Batch& batch, std::size_t target_vocab);

/// Sum over streams of weight * smoothed CE, averaged over non-PAD target
/// positions, plus nvs_weight times the mean NVS binary CE. SHIFT labels
/// count towards the loss but not towards factor accuracy.
LossResult compute_loss(Tape& tape, const ForwardOutputs& outputs, const Batch& batch, const ModelConfig& config,
                        double label_smoothing, std::span<const double> factor_weights = {},
                        double nvs_weight = 1.0);

inline constexpr const char* kFreezePresets[] = {"all_except_decoder", "all_except_output_layer",
                                                 "all_except_embeddings", "all_except_feed_forward"};

struct FreezeReport {
  std::vector<std::string> frozen;
  /// Patterns that matched nothing.
  std::vector<std::string> warnings;
};

/// Marks matching parameters frozen. A single preset name selects a
/// preset; anything else is a list of glob patterns ('*', '?').
FreezeReport freeze_params(ModelParams& params, std::span<const std::string> spec);

/// Adam with bias correction; frozen parameters and their moments are
/// left untouched.
class Adam {
 public:
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ModelParams& params, const std::map<std::string, const Tensor*>& grads, double lr);

  std::size_t steps() const { return steps_; }
  void save(const std::filesystem::path& file) const;
  void load(const std::filesystem::path& file);

 private:
  double beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

struct CheckpointRecord {
  std::size_t update = 0;
  double validation_loss = 0;
  std::filesystem::path file;
};

/// Elementwise mean of the best_n checkpoints by ascending validation loss
/// (ties: earlier update).
ModelParams average_checkpoints(std::span<const CheckpointRecord> checkpoints, std::size_t best_n);

/// Per-token validation loss over pairs (no gradients).
double validation_loss(const Model& model, std::span<const EncodedPair> pairs, const TrainConfig& config);

struct TrainResult {
  std::size_t updates = 0;
  std::vector<CheckpointRecord> checkpoints;
  std::vector<double> train_losses;  // one per update of this run
  std::filesystem::path averaged;
};

struct TrainInputs {
  std::filesystem::path data_dir;
  std::filesystem::path output_dir;
  ModelConfig model;
  std::vector<EncodedPair> validation;
  /// Start from this checkpoint. A `state.NNNNN` file next to a
  /// `params.NNNNN` checkpoint restores the optimizer and data position too.
  std::filesystem::path params;
};

/// Called after every update with the update index and training loss.
using UpdateCallback = std::function<void(std::size_t update, const LossResult& loss)>;

/// Runs training and writes config, vocabularies, params.NNNNN checkpoints
/// with state.NNNNN optimizer state, the `metrics` sidecar (update, tab,
/// validation loss) and params.best (average of the best checkpoints).
TrainResult train(const TrainInputs& inputs, const TrainConfig& config, const UpdateCallback& callback = {});

}  // namespace nmt
