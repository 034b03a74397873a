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

#include "nmt/search.hpp"

#include <algorithm>
#include <cmath>

#include "nmt/error.hpp"
#include "nmt/kernels.hpp"

namespace nmt {

ModelCursor::ModelCursor(std::shared_ptr<const InferenceModel> model, std::shared_ptr<const EncoderOutput> encoded,
                         std::shared_ptr<const OutputVocab> vocab)
    : model_(std::move(model)), encoded_(std::move(encoded)), vocab_(std::move(vocab)) {
  state_ = model_->start(*encoded_);
}

std::unique_ptr<SearchCursor> ModelCursor::clone() const { return std::make_unique<ModelCursor>(*this); }

StepLogits ModelCursor::step(const StepInput& prev) {
  TargetFactorOutput out = model_->decode_step(state_, *encoded_, prev, vocab_.get());
  StepLogits s;
  s.surface = std::move(out.surface_logits.storage());
  for (auto& f : out.factor_logits) s.factors.push_back(std::move(f.storage()));
  return s;
}

std::size_t max_output_length(std::size_t source_len) { return 2 * source_len + 10; }

std::size_t argmax(const std::vector<Real>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

int choose_factor(const std::vector<Real>& logits) {
  const std::size_t first = logits.size() > std::size_t(kShiftId) + 1 ? std::size_t(kShiftId) + 1 : 0;
  std::size_t best = first;
  for (std::size_t i = first + 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return int(best);
}

namespace {

std::size_t vocab_index(const std::vector<int>& vocab, int id) {
  auto it = std::lower_bound(vocab.begin(), vocab.end(), id);
  if (it == vocab.end() || *it != id)
    throw InputError("target id " + std::to_string(id) + " is not in the active vocabulary");
  return std::size_t(it - vocab.begin());
}

void check_problem(const SearchProblem& p) {
  if (!p.root) throw ConfigError("search problem has no cursor");
  if (p.prefix.size() > p.max_len)
    throw InputError("target prefix of " + std::to_string(p.prefix.size()) +
                     " tokens exceeds the maximum output length " + std::to_string(p.max_len));
  if (p.prefix_factors.size() > p.factor_vocab_sizes.size())
    throw InputError("prefix factors given for " + std::to_string(p.prefix_factors.size()) +
                     " streams, model has " + std::to_string(p.factor_vocab_sizes.size()));
  vocab_index(p.vocab, kEosId);
}

std::vector<Real> log_probs(std::vector<Real> logits) {
  kernels::log_softmax_inplace(logits);
  return logits;
}

// Factor of output token `position`, read off the step that follows it.
int decide_factor(const SearchProblem& p, const StepLogits& out, std::size_t stream, std::size_t position) {
  if (stream < p.prefix_factors.size() && position < p.prefix_factors[stream].size())
    return p.prefix_factors[stream][position];
  if (out.factors.size() != p.factor_vocab_sizes.size())
    throw DimensionError("cursor returned " + std::to_string(out.factors.size()) + " factor distributions, expected " +
                         std::to_string(p.factor_vocab_sizes.size()));
  return choose_factor(out.factors[stream]);
}

// Decoder input after emitting `token` at `step`: factors of the token
// before it (SHIFT after the first step).
StepInput next_input(int token, std::size_t step, const Hypothesis& h) {
  StepInput in{token, {}};
  for (const auto& f : h.factors) in.factors.push_back(step == 0 ? kShiftId : f[step - 1]);
  return in;
}

StepInput first_input(std::size_t factors) { return {kBosId, std::vector<int>(factors, kBosId)}; }

void finish(Hypothesis& h, double alpha, bool forced) {
  h.finished = true;
  h.forced_eos = forced;
  h.score = h.log_prob / std::pow(double(h.tokens.size() + 1), alpha);
}

}  // namespace

Hypothesis greedy_search(const SearchProblem& p, double length_alpha) {
  check_problem(p);
  const std::size_t nf = p.factor_vocab_sizes.size();
  std::unique_ptr<SearchCursor> cursor = p.root->clone();
  Hypothesis h;
  h.factors.assign(nf, {});
  StepInput in = first_input(nf);
  for (std::size_t step = 0;; ++step) {
    const StepLogits out = cursor->step(in);
    if (step > 0)
      for (std::size_t f = 0; f < nf; ++f) h.factors[f].push_back(decide_factor(p, out, f, step - 1));
    const std::vector<Real> lp = log_probs(out.surface);
    const bool forced = step == p.max_len && step >= p.prefix.size();
    std::size_t idx;
    if (step < p.prefix.size())
      idx = vocab_index(p.vocab, p.prefix[step]);
    else if (forced)
      idx = vocab_index(p.vocab, kEosId);
    else
      idx = argmax(lp);
    h.log_prob += double(lp[idx]);
    const int token = p.vocab[idx];
    if (token == kEosId) {
      finish(h, length_alpha, forced);
      return h;
    }
    h.tokens.push_back(token);
    in = next_input(token, step, h);
  }
}

Hypothesis beam_search(const SearchProblem& p, const SearchOptions& options) {
  check_problem(p);
  if (options.beam == 0) throw ConfigError("beam size must be at least 1");
  const std::size_t nf = p.factor_vocab_sizes.size();
  struct Live {
    std::unique_ptr<SearchCursor> cursor;
    Hypothesis hyp;
    StepInput input;
  };
  struct Candidate {
    double total;
    Real lp;
    std::size_t idx;
    std::size_t parent;
  };
  std::vector<Live> live;
  {
    Live root{p.root->clone(), {}, first_input(nf)};
    root.hyp.factors.assign(nf, {});
    live.push_back(std::move(root));
  }
  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; !live.empty(); ++step) {
    const std::size_t slots = options.beam - finished.size();
    const bool forced = step == p.max_len && step >= p.prefix.size();
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      Live& l = live[i];
      const StepLogits out = l.cursor->step(l.input);
      if (step > 0)
        for (std::size_t f = 0; f < nf; ++f) l.hyp.factors[f].push_back(decide_factor(p, out, f, step - 1));
      const std::vector<Real> lp = log_probs(out.surface);
      auto add = [&](std::size_t idx) { cands.push_back({l.hyp.log_prob + double(lp[idx]), lp[idx], idx, i}); };
      if (step < p.prefix.size())
        add(vocab_index(p.vocab, p.prefix[step]));
      else if (forced)
        add(vocab_index(p.vocab, kEosId));
      else
        for (std::size_t idx = 0; idx < lp.size(); ++idx) add(idx);
    }
    const std::size_t keep = std::min(slots, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + std::ptrdiff_t(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.total != b.total) return a.total > b.total;
                        if (a.lp != b.lp) return a.lp > b.lp;
                        if (a.idx != b.idx) return a.idx < b.idx;
                        return a.parent < b.parent;
                      });
    cands.resize(keep);
    std::vector<std::size_t> uses(live.size(), 0);
    for (const Candidate& c : cands) ++uses[c.parent];
    std::vector<Live> next;
    for (const Candidate& c : cands) {
      Live& parent = live[c.parent];
      Hypothesis h = parent.hyp;
      h.log_prob = c.total;
      const int token = p.vocab[c.idx];
      if (token == kEosId) {
        finish(h, options.length_alpha, forced);
        finished.push_back(std::move(h));
        --uses[c.parent];
        continue;
      }
      h.tokens.push_back(token);
      Live child{--uses[c.parent] == 0 ? std::move(parent.cursor) : parent.cursor->clone(), {}, next_input(token, step, h)};
      child.hyp = std::move(h);
      next.push_back(std::move(child));
    }
    live = std::move(next);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (finished[i].score > finished[best].score) best = i;
  return finished[best];
}

SearchProblem make_search_problem(std::shared_ptr<const InferenceModel> model,
                                  std::shared_ptr<const EncoderOutput> encoded, std::vector<int> vocab,
                                  std::vector<int> prefix, std::vector<std::vector<int>> prefix_factors) {
  const ModelConfig& config = model->config();
  SearchProblem p;
  std::shared_ptr<const OutputVocab> restricted;
  if (vocab.empty()) {
    p.vocab = model->full_vocab().ids;
  } else {
    for (int id : {kPadId, kUnkId, kEosId}) vocab.push_back(id);
    vocab.insert(vocab.end(), prefix.begin(), prefix.end());
    std::sort(vocab.begin(), vocab.end());
    vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
    if (vocab.size() == config.target_vocab_size) {
      p.vocab = model->full_vocab().ids;
    } else {
      restricted = std::make_shared<const OutputVocab>(model->restrict_vocab(vocab));
      p.vocab = std::move(vocab);
    }
  }
  for (const auto& spec : config.target_factor_specs) p.factor_vocab_sizes.push_back(spec.vocab_size);
  p.max_len = max_output_length(encoded->states.rows());
  p.prefix = std::move(prefix);
  p.prefix_factors = std::move(prefix_factors);
  for (std::size_t f = 0; f < p.prefix_factors.size() && f < p.factor_vocab_sizes.size(); ++f)
    for (int id : p.prefix_factors[f])
      if (id < 0 || std::size_t(id) >= p.factor_vocab_sizes[f])
        throw InputError("prefix factor id " + std::to_string(id) + " outside factor vocabulary " + std::to_string(f));
  p.root = std::make_unique<ModelCursor>(std::move(model), std::move(encoded), std::move(restricted));
  return p;
}

}  // namespace nmt
