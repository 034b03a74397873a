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

#include "nmt/trainer.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <regex>
#include <thread>

#include <json.hpp>

#include "nmt/binary_io.hpp"
#include "nmt/error.hpp"
#include "nmt/shards.hpp"
#include "nmt/vocab.hpp"

namespace nmt {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (checkpoint_interval == 0) throw ConfigError("checkpoint_interval must be at least 1");
  if (max_updates > 0 && checkpoint_interval > max_updates)
    throw ConfigError("checkpoint_interval " + std::to_string(checkpoint_interval) + " exceeds max_updates " +
                      std::to_string(max_updates));
  if (average_best == 0) throw ConfigError("average_best must be at least 1");
  if (label_smoothing < 0 || label_smoothing >= 1) throw ConfigError("label_smoothing must lie in [0, 1)");
  if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
  if (batch_tokens == 0) throw ConfigError("batch_tokens must be positive");
}

double learning_rate_at(const TrainConfig& c, std::size_t update) {
  const double u = double(std::max<std::size_t>(update, 1));
  if (c.warmup == 0) return c.learning_rate / std::sqrt(u);
  const double w = double(c.warmup);
  return c.learning_rate * std::min(u / w, std::sqrt(w / u));
}

Tensor nvs_targets(const Batch& batch, std::size_t target_vocab) {
  Tensor out({batch.size, target_vocab});
  for (std::size_t b = 0; b < batch.size; ++b)
    for (std::size_t t = 0; t < batch.target_len; ++t) {
      const int id = batch.target_label[b * batch.target_len + t];
      if (id > kEosId && std::size_t(id) < target_vocab) out.at(b, std::size_t(id)) = Real(1);
    }
  return out;
}

namespace {

void count_accuracy(const Tensor& logits, const std::vector<int>& labels, StreamMetrics& m, bool skip_shift) {
  const std::size_t n = logits.cols();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int label = labels[r];
    if (label == kPadId || (skip_shift && label == kShiftId)) continue;
    const Real* row = logits.data().data() + r * n;
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (row[j] > row[best]) best = j;
    ++m.counted;
    if (int(best) == label) ++m.correct;
  }
}

}  // namespace

LossResult compute_loss(Tape& tape, const ForwardOutputs& out, const Batch& batch, const ModelConfig& config,
                        double label_smoothing, std::span<const double> factor_weights, double nvs_weight) {
  if (out.factor_logits.size() != config.target_factor_specs.size() ||
      batch.target_factor_label.size() != config.target_factor_specs.size())
    throw DimensionError("loss: " + std::to_string(out.factor_logits.size()) + " factor outputs and " +
                         std::to_string(batch.target_factor_label.size()) + " factor label streams for " +
                         std::to_string(config.target_factor_specs.size()) + " configured factors");
  if (tape.value(out.surface_logits).rows() != batch.target_label.size())
    throw DimensionError("loss: " + std::to_string(tape.value(out.surface_logits).rows()) + " output rows for " +
                         std::to_string(batch.target_label.size()) + " target positions");
  if (batch.target_tokens == 0) throw InputError("loss: batch has no target tokens");
  LossResult r;
  r.tokens = batch.target_tokens;
  const Real eps = Real(label_smoothing);
  const Real inv_tokens = Real(1.0 / double(batch.target_tokens));
  Var ce = ad::smoothed_cross_entropy(tape, out.surface_logits, batch.target_label, eps, kPadId);
  r.surface.loss = double(tape.value(ce)[0]) / double(batch.target_tokens);
  count_accuracy(tape.value(out.surface_logits), batch.target_label, r.surface, false);
  Var total = ad::scale(tape, ce, inv_tokens);
  for (std::size_t f = 0; f < out.factor_logits.size(); ++f) {
    const double w = f < factor_weights.size() ? factor_weights[f] : 1.0;
    Var fce = ad::smoothed_cross_entropy(tape, out.factor_logits[f], batch.target_factor_label[f], eps, kPadId);
    StreamMetrics m;
    m.loss = double(tape.value(fce)[0]) / double(batch.target_tokens);
    count_accuracy(tape.value(out.factor_logits[f]), batch.target_factor_label[f], m, true);
    r.factors.push_back(m);
    total = ad::add(tape, total, ad::scale(tape, fce, Real(w) * inv_tokens));
  }
  if (config.nvs_enabled && out.nvs_logits.valid()) {
    const Var bce = ad::bce_with_logits(tape, out.nvs_logits, nvs_targets(batch, config.target_vocab_size));
    const double entries = double(batch.size * config.target_vocab_size);
    r.nvs = double(tape.value(bce)[0]) / entries;
    total = ad::add(tape, total, ad::scale(tape, bce, Real(nvs_weight / entries)));
  }
  r.loss = total;
  r.value = double(tape.value(total)[0]);
  return r;
}

FreezeReport freeze_params(ModelParams& params, std::span<const std::string> spec) {
  FreezeReport report;
  auto freeze_if = [&](auto&& pred) {
    for (const auto& name : params.names())
      if (pred(name)) {
        params.set_frozen(name, true);
        report.frozen.push_back(name);
      }
  };
  if (spec.size() == 1) {
    const std::string& s = spec[0];
    if (s == "all_except_decoder") {
      freeze_if([](const std::string& n) { return !n.starts_with("decoder."); });
      return report;
    }
    if (s == "all_except_output_layer") {
      freeze_if([](const std::string& n) { return !n.starts_with("decoder.output."); });
      return report;
    }
    if (s == "all_except_embeddings") {
      freeze_if([](const std::string& n) { return n.find(".embed.") == std::string::npos; });
      return report;
    }
    if (s == "all_except_feed_forward") {
      freeze_if([](const std::string& n) { return n.find(".ffn.") == std::string::npos; });
      return report;
    }
  }
  for (const std::string& pattern : spec) {
    const std::size_t before = report.frozen.size();
    freeze_if([&](const std::string& n) { return ::fnmatch(pattern.c_str(), n.c_str(), 0) == 0; });
    if (report.frozen.size() == before) report.warnings.push_back("freeze pattern '" + pattern + "' matched no parameter");
  }
  std::sort(report.frozen.begin(), report.frozen.end());
  report.frozen.erase(std::unique(report.frozen.begin(), report.frozen.end()), report.frozen.end());
  return report;
}

void Adam::step(ModelParams& params, const std::map<std::string, const Tensor*>& grads, double lr) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, double(steps_));
  const double c2 = 1.0 - std::pow(beta2_, double(steps_));
  for (const auto& [name, grad] : grads) {
    if (params.frozen(name) || grad == nullptr || grad->empty()) continue;
    Tensor& p = params.at(name);
    auto [mit, mnew] = m_.try_emplace(name, p.shape());
    auto [vit, vnew] = v_.try_emplace(name, p.shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = (*grad)[i];
      m[i] = Real(beta1_ * m[i] + (1.0 - beta1_) * g);
      v[i] = Real(beta2_ * v[i] + (1.0 - beta2_) * g * g);
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      p[i] = Real(p[i] - lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

namespace {

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  binary::write_u32(out, std::uint32_t(name.size()));
  binary::write_bytes(out, name);
  binary::write_u32(out, std::uint32_t(t.rank()));
  for (std::size_t e : t.shape()) binary::write_u32(out, std::uint32_t(e));
  for (Real v : t.data()) binary::write_f32(out, float(v));
}

std::pair<std::string, Tensor> read_tensor(std::istream& in) {
  const std::string name = binary::read_bytes(in, binary::read_u32(in, "name length"), "name");
  Shape shape(binary::read_u32(in, "rank"));
  for (auto& e : shape) e = binary::read_u32(in, "extent");
  Tensor t(shape);
  for (Real& v : t.data()) v = Real(binary::read_f32(in, "value"));
  return {name, std::move(t)};
}

}  // namespace

void Adam::save(const fs::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw CheckpointError("cannot write optimizer state " + file.string());
  binary::write_bytes(out, "SKA1");
  binary::write_u64(out, steps_);
  binary::write_u32(out, std::uint32_t(m_.size()));
  for (const auto& [name, m] : m_) {
    write_tensor(out, name, m);
    write_tensor(out, name, v_.at(name));
  }
  if (!out) throw CheckpointError("failed writing optimizer state " + file.string());
}

void Adam::load(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CheckpointError("cannot read optimizer state " + file.string());
  try {
    if (binary::read_bytes(in, 4, "magic") != "SKA1") throw CheckpointError(file.string() + " is not optimizer state");
    steps_ = binary::read_u64(in, "steps");
    const std::uint32_t n = binary::read_u32(in, "count");
    m_.clear();
    v_.clear();
    for (std::uint32_t i = 0; i < n; ++i) {
      auto [name, m] = read_tensor(in);
      auto [vname, v] = read_tensor(in);
      m_[name] = std::move(m);
      v_[vname] = std::move(v);
    }
  } catch (const DataError& e) {
    throw CheckpointError(file.string() + ": " + e.what());
  }
}

ModelParams average_checkpoints(std::span<const CheckpointRecord> checkpoints, std::size_t best_n) {
  if (best_n == 0) throw ConfigError("best_n must be at least 1");
  if (checkpoints.size() < best_n)
    throw ConfigError("cannot average the best " + std::to_string(best_n) + " of " +
                      std::to_string(checkpoints.size()) + " checkpoints");
  std::vector<CheckpointRecord> sorted(checkpoints.begin(), checkpoints.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const CheckpointRecord& a, const CheckpointRecord& b) {
    if (a.validation_loss != b.validation_loss) return a.validation_loss < b.validation_loss;
    return a.update < b.update;
  });
  sorted.resize(best_n);
  ModelParams first = load_params(sorted.front().file);
  std::map<std::string, std::vector<double>> sums;
  for (const auto& [name, t] : first.tensors()) sums[name].assign(t.data().begin(), t.data().end());
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const ModelParams p = load_params(sorted[i].file);
    for (const auto& [name, t] : p.tensors())
      if (!first.contains(name))
        throw CheckpointError(sorted[i].file.string() + " has parameter " + name + " missing from " +
                              sorted.front().file.string());
    for (auto& [name, sum] : sums) {
      if (!p.contains(name))
        throw CheckpointError(sorted[i].file.string() + " lacks parameter " + name);
      const Tensor& t = p.at(name);
      if (t.shape() != first.at(name).shape())
        throw CheckpointError("parameter " + name + " has shape " + shape_string(t.shape()) + " in " +
                              sorted[i].file.string() + " but " + shape_string(first.at(name).shape()) + " in " +
                              sorted.front().file.string());
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += t[j];
    }
  }
  for (auto& [name, sum] : sums) {
    Tensor& t = first.at(name);
    for (std::size_t j = 0; j < sum.size(); ++j) t[j] = Real(sum[j] / double(best_n));
  }
  return first;
}

namespace {

std::vector<std::vector<EncodedPair>> length_batches(std::span<const EncodedPair> pairs, std::size_t batch_tokens) {
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pairs[a].target.size() < pairs[b].target.size(); });
  std::vector<std::vector<EncodedPair>> out;
  std::vector<EncodedPair> cur;
  std::size_t longest = 0;
  for (std::size_t i : order) {
    const std::size_t len = pairs[i].target.size() + 1;
    if (!cur.empty() && (cur.size() + 1) * std::max(longest, len) > batch_tokens) {
      out.push_back(std::move(cur));
      cur.clear();
      longest = 0;
    }
    cur.push_back(pairs[i]);
    longest = std::max(longest, len);
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

double validation_loss(const Model& model, std::span<const EncodedPair> pairs, const TrainConfig& config) {
  if (pairs.empty()) return 0;
  double total = 0;
  std::size_t tokens = 0;
  for (const auto& group : length_batches(pairs, config.batch_tokens)) {
    const Batch batch = make_batch(group);
    Tape tape;
    ParamBinding bind(tape, model.params(), false);
    const ForwardOutputs out = model.forward(tape, bind, batch);
    const LossResult loss = compute_loss(tape, out, batch, model.config(), config.label_smoothing,
                                         config.factor_loss_weights, config.nvs_loss_weight);
    total += loss.value * double(batch.target_tokens);
    tokens += batch.target_tokens;
  }
  return total / double(tokens);
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1));
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 29;
  return x;
}

struct FeedItem {
  Batch batch;
  std::size_t epoch = 0;
  std::size_t index = 0;  // position within the epoch
};

// Endless deterministic batch stream over epochs, optionally produced on a
// background thread through a queue of two batches.
class BatchFeed {
 public:
  BatchFeed(fs::path dir, std::size_t batch_tokens, std::uint64_t seed, std::size_t epoch, std::size_t skip,
            bool background)
      : dir_(std::move(dir)), batch_tokens_(batch_tokens), seed_(seed), epoch_(epoch), skip_(skip) {
    if (background) worker_ = std::thread([this] { run(); });
  }

  ~BatchFeed() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  FeedItem next() {
    if (!worker_.joinable()) return produce();
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return !queue_.empty() || error_; });
    if (queue_.empty()) std::rethrow_exception(error_);
    FeedItem item = std::move(queue_.front());
    queue_.pop_front();
    cv_.notify_all();
    return item;
  }

 private:
  static constexpr std::size_t kCapacity = 2;

  FeedItem produce() {
    for (;;) {
      if (!iter_) {
        iter_.emplace(dir_, batch_tokens_, epoch_seed(seed_, epoch_));
        index_ = 0;
      }
      auto pairs = iter_->next();
      if (!pairs) {
        if (index_ == 0) throw DataError("prepared data in " + dir_.string() + " holds no batches");
        iter_.reset();
        ++epoch_;
        continue;
      }
      const std::size_t index = index_++;
      if (skip_ > 0) {
        --skip_;
        continue;
      }
      return {make_batch(*pairs), epoch_, index};
    }
  }

  void run() {
    try {
      for (;;) {
        FeedItem item = produce();
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return queue_.size() < kCapacity || stop_; });
        if (stop_) return;
        queue_.push_back(std::move(item));
        cv_.notify_all();
      }
    } catch (...) {
      std::lock_guard lock(mutex_);
      error_ = std::current_exception();
      cv_.notify_all();
    }
  }

  fs::path dir_;
  std::size_t batch_tokens_;
  std::uint64_t seed_;
  std::size_t epoch_;
  std::size_t skip_;
  std::optional<ShardIterator> iter_;
  std::size_t index_ = 0;
  std::thread worker_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<FeedItem> queue_;
  std::exception_ptr error_;
  bool stop_ = false;
};

std::string numbered(const char* stem, std::size_t update) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s.%05zu", stem, update);
  return buf;
}

void write_metrics(const fs::path& file, const std::vector<CheckpointRecord>& records) {
  std::ofstream out(file, std::ios::binary);
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\n", r.update, r.validation_loss);
    out << buf;
  }
  if (!out) throw CheckpointError("failed writing " + file.string());
}

std::vector<CheckpointRecord> read_metrics(const fs::path& dir) {
  std::vector<CheckpointRecord> out;
  std::ifstream in(dir / "metrics");
  for (std::string line; std::getline(in, line);) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    CheckpointRecord r;
    r.update = std::stoul(line.substr(0, tab));
    r.validation_loss = std::stod(line.substr(tab + 1));
    r.file = dir / numbered("params", r.update);
    out.push_back(r);
  }
  return out;
}

struct TrainingState {
  std::size_t update = 0;
  std::size_t epoch = 0;
  std::size_t next_batch = 0;
};

void save_state(const fs::path& file, const TrainingState& s) {
  nlohmann::ordered_json j{{"update", s.update}, {"epoch", s.epoch}, {"next_batch", s.next_batch}};
  std::ofstream out(file, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw CheckpointError("failed writing " + file.string());
}

TrainingState load_state(const fs::path& file) {
  std::ifstream in(file);
  try {
    const auto j = nlohmann::json::parse(in);
    return {j.at("update").get<std::size_t>(), j.at("epoch").get<std::size_t>(), j.at("next_batch").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(file.string() + ": " + e.what());
  }
}

}  // namespace

TrainResult train(const TrainInputs& in, const TrainConfig& config, const UpdateCallback& callback) {
  config.validate();
  in.model.validate();
  const fs::path out_dir = in.output_dir;
  fs::create_directories(out_dir);
  const Vocabularies vocabs = Vocabularies::load(in.data_dir);
  if (vocabs.source.size() != in.model.source_vocab_size || vocabs.target.size() != in.model.target_vocab_size)
    throw ConfigError("model vocabulary sizes do not match the prepared data");
  vocabs.save(out_dir);
  save_config(in.model, out_dir / "config");

  TrainingState state;
  Adam adam(config.adam_beta1, config.adam_beta2, config.adam_eps);
  std::vector<CheckpointRecord> records;
  Model model = Model::initialize(in.model, config.seed);
  if (!in.params.empty()) {
    model = Model(in.model, load_params(in.params));
    static const std::regex numbered_params(R"(params\.(\d+))");
    std::smatch m;
    const std::string name = in.params.filename().string();
    if (std::regex_match(name, m, numbered_params)) {
      const fs::path dir = in.params.parent_path();
      const fs::path state_file = dir / ("state." + m[1].str());
      const fs::path optim_file = dir / ("optim." + m[1].str());
      if (fs::exists(state_file) && fs::exists(optim_file)) {
        state = load_state(state_file);
        adam.load(optim_file);
        for (const auto& r : read_metrics(dir))
          if (r.update <= state.update) records.push_back({r.update, r.validation_loss, out_dir / r.file.filename()});
        if (fs::absolute(dir) != fs::absolute(out_dir))
          for (const auto& r : records) fs::copy_file(dir / r.file.filename(), r.file, fs::copy_options::overwrite_existing);
      }
    }
  }
  const FreezeReport frozen = freeze_params(model.params(), config.freeze);
  for (const auto& w : frozen.warnings) std::cerr << "warning: " << w << '\n';

  TrainResult result;
  auto checkpoint = [&](std::size_t update) {
    const fs::path file = out_dir / numbered("params", update);
    save_params(model.params(), file);
    adam.save(out_dir / numbered("optim", update));
    save_state(out_dir / numbered("state", update), state);
    const double loss = validation_loss(model, in.validation, config);
    std::erase_if(records, [update](const CheckpointRecord& r) { return r.update == update; });
    records.push_back({update, loss, file});
    write_metrics(out_dir / "metrics", records);
  };
  if (records.empty()) checkpoint(state.update);

  BatchFeed feed(in.data_dir, config.batch_tokens, config.seed, state.epoch, state.next_batch, config.prefetch);
  while (state.update < config.max_updates) {
    FeedItem item = feed.next();
    const std::size_t update = state.update + 1;
    Tape tape;
    ParamBinding bind(tape, model.params());
    const ForwardOutputs out = model.forward(tape, bind, item.batch);
    const LossResult loss = compute_loss(tape, out, item.batch, model.config(), config.label_smoothing,
                                         config.factor_loss_weights, config.nvs_loss_weight);
    if (!std::isfinite(loss.value))
      throw NumericError("non-finite training loss at update " + std::to_string(update));
    tape.backward(loss.loss);
    std::map<std::string, const Tensor*> grads;
    for (const auto& [name, var] : bind.bound())
      if (tape.requires_grad(var)) grads[name] = &tape.grad(var);
    adam.step(model.params(), grads, learning_rate_at(config, update));
    state.update = update;
    state.epoch = item.epoch;
    state.next_batch = item.index + 1;
    result.train_losses.push_back(loss.value);
    if (callback) callback(update, loss);
    if (update % config.checkpoint_interval == 0 || update == config.max_updates) checkpoint(update);
  }

  result.updates = state.update;
  std::sort(records.begin(), records.end(),
            [](const CheckpointRecord& a, const CheckpointRecord& b) { return a.update < b.update; });
  result.checkpoints = records;
  const std::size_t n = std::min(config.average_best, records.size());
  ModelParams averaged = average_checkpoints(records, n);
  result.averaged = out_dir / "params.best";
  save_params(averaged, result.averaged);
  return result;
}

}  // namespace nmt
