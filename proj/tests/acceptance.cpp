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

// Acceptance run: one PASS/FAIL line per criterion, with the measured
// figures next to it. Exit status is the number of failed criteria.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nmt/bench.hpp"
#include "nmt/cost.hpp"
#include "nmt/error.hpp"
#include "nmt/input.hpp"
#include "nmt/kernels.hpp"
#include "nmt/lexical.hpp"
#include "nmt/model.hpp"
#include "nmt/quant.hpp"
#include "nmt/search.hpp"
#include "nmt/shards.hpp"
#include "nmt/trainer.hpp"
#include "nmt/translate.hpp"
#include "support.hpp"

using namespace nmt;
using nmt::test::TempDir;
using nmt::test::ToyCorpus;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr double kStepwiseTolerance = 1e-5;
constexpr double kDecompositionTolerance = 1e-5;
constexpr double kSaturatedTolerance = 1e-8;
constexpr double kGradTolerance = 1e-4;
constexpr double kFactorAccuracy = 0.99;
constexpr double kInt8Agreement = 0.95;
constexpr double kCopyAccuracy = 0.99;
constexpr std::size_t kCopyUpdateBudget = 3000;
constexpr double kNvsRecall = 0.95;
constexpr double kNvsVocabFraction = 0.5;
constexpr std::size_t kSeededInputs = 200;
constexpr std::size_t kPrefixInputs = 100;

// Bookkeeping ---------------------------------------------------------------

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("FAILED " + what);
    }
  }
  void note(const std::string& what) { notes.push_back(what); }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// Finite-difference figures from the FP64 helper, by name.
std::map<std::string, double> f64_measurements() {
  std::map<std::string, double> out;
  FILE* p = ::popen(NMT_ACCEPTANCE_F64, "r");
  if (!p) return out;
  char name[128];
  double value = 0;
  while (std::fscanf(p, "%127s %lf", name, &value) == 2) out[name] = value;
  ::pclose(p);
  return out;
}

const std::map<std::string, double>& f64() {
  static const std::map<std::string, double> m = f64_measurements();
  return m;
}

std::vector<std::string> tokens_of(const std::string& s) { return tokenize(s); }

// Trained toy models --------------------------------------------------------

TokenizedPair tokenized(const ToyCorpus& c, std::size_t i) {
  TokenizedPair p{tokenize(c.source[i]), {}, tokenize(c.target[i]), {}};
  for (const auto& f : c.source_factors) p.source_factors.push_back(tokenize(f[i]));
  for (const auto& f : c.target_factors) p.target_factors.push_back(tokenize(f[i]));
  return p;
}

SentenceInput input_of(const TokenizedPair& p) {
  SentenceInput in;
  in.tokens = p.source;
  in.source_factors = p.source_factors;
  return in;
}

PrepareOptions prepare_options(const fs::path& dir, const std::string& stem, const ToyCorpus& c,
                               std::size_t shards) {
  c.write(dir, stem);
  PrepareOptions o;
  o.source = dir / (stem + ".src");
  o.target = dir / (stem + ".trg");
  for (std::size_t f = 0; f < c.source_factors.size(); ++f)
    o.source_factors.push_back(dir / (stem + ".src.f" + std::to_string(f)));
  for (std::size_t f = 0; f < c.target_factors.size(); ++f)
    o.target_factors.push_back(dir / (stem + ".trg.f" + std::to_string(f)));
  o.output = dir / (stem + ".prepared");
  o.num_shards = shards;
  return o;
}

// Word-for-word translation with a case factor on both sides, an SSRU
// decoder and a vocabulary-selection head. Shared by several criteria.
struct CaseTask {
  TempDir dir;
  ToyCorpus train_corpus;
  std::vector<TokenizedPair> test;
  double train_seconds = 0;
  std::size_t updates = 0;
  ModelBundle bundle;

  CaseTask() : bundle(make()) {}

  ModelBundle make() {
    const auto start = std::chrono::steady_clock::now();
    train_corpus = nmt::test::case_corpus(6000, 1);
    const ToyCorpus dev = nmt::test::case_corpus(100, 2);
    const ToyCorpus held_out = nmt::test::case_corpus(300, 3);
    for (std::size_t i = 0; i < held_out.source.size(); ++i) test.push_back(tokenized(held_out, i));

    prepare_shards(prepare_options(dir.path(), "train", train_corpus, 4));
    const Vocabularies v = Vocabularies::load(dir / "train.prepared");
    TrainInputs in;
    in.data_dir = dir / "train.prepared";
    in.output_dir = dir / "model";
    ModelConfig& m = in.model;
    m.d_model = 64;
    m.heads = 4;
    m.ff_dim = 256;
    m.encoder_layers = 2;
    m.decoder_layers = 2;
    m.decoder_kind = DecoderKind::ssru;
    m.source_vocab_size = v.source.size();
    m.target_vocab_size = v.target.size();
    m.source_factor_specs = {{v.source_factors[0].size(), 16, FactorCombine::concat}};
    m.target_factor_specs = {{v.target_factors[0].size()}};
    m.nvs_enabled = true;
    m.max_seq_len = 16;
    for (std::size_t i = 0; i < dev.source.size(); ++i) in.validation.push_back(encode_pair(v, tokenized(dev, i)));
    TrainConfig t;
    t.max_updates = 3000;
    t.checkpoint_interval = 500;
    t.average_best = 2;
    t.batch_tokens = 1024;
    t.warmup = 200;
    t.learning_rate = 2e-3;
    t.nvs_loss_weight = 10;
    updates = train(in, t).updates;
    train_seconds = seconds_since(start);
    return load_model(in.output_dir);
  }
};

CaseTask& case_task() {
  static CaseTask task;
  return task;
}

// Fraction of reference factor positions reproduced by greedy decoding.
// Positions past the end of the output count as wrong.
double factor_accuracy(const Translator& t, const std::vector<TokenizedPair>& pairs) {
  std::size_t correct = 0, total = 0;
  for (const auto& p : pairs) {
    const TranslationRecord r = t.translate(input_of(p));
    const auto got = r.factors.empty() ? std::vector<std::string>{} : tokens_of(r.factors[0]);
    for (std::size_t j = 0; j < p.target_factors[0].size(); ++j) {
      ++total;
      correct += j < got.size() && got[j] == p.target_factors[0][j];
    }
  }
  return total ? double(correct) / double(total) : 0;
}

// Teacher-forced logits from the training graph.
struct Logits {
  Tensor surface;
  std::vector<Tensor> factors;
};

Logits graph_logits(const Model& m, const EncodedPair& p) {
  const Batch b = make_batch(std::vector<EncodedPair>{p});
  Tape t;
  ParamBinding bind(t, m.params(), false);
  const ForwardOutputs out = m.forward(t, bind, b);
  Logits r{t.value(out.surface_logits), {}};
  for (Var f : out.factor_logits) r.factors.push_back(t.value(f));
  return r;
}

// The same logits from one decoder step at a time.
Logits stepwise_logits(const InferenceModel& m, const EncodedPair& p) {
  const Batch b = make_batch(std::vector<EncodedPair>{p});
  const EncoderOutput enc = m.prepare(p.source, p.source_factors);
  DecoderState s = m.start(enc);
  Logits r;
  const std::size_t T = b.target_len;
  r.surface = Tensor({T, m.config().target_vocab_size});
  for (const auto& f : m.config().target_factor_specs) r.factors.emplace_back(Shape{T, f.vocab_size});
  for (std::size_t t = 0; t < T; ++t) {
    StepInput in{b.target_input[t], {}};
    for (const auto& f : b.target_factor_input) in.factors.push_back(f[t]);
    const TargetFactorOutput o = m.decode_step(s, enc, in);
    std::copy(o.surface_logits.data().begin(), o.surface_logits.data().end(), r.surface.row(t).begin());
    for (std::size_t f = 0; f < o.factor_logits.size(); ++f)
      std::copy(o.factor_logits[f].data().begin(), o.factor_logits[f].data().end(), r.factors[f].row(t).begin());
  }
  return r;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// log_softmax of one row evaluated at `label`, in double.
double row_log_prob(const Tensor& logits, std::size_t row, int label) {
  const auto r = logits.row(row);
  double m = -INFINITY;
  for (Real v : r) m = std::max(m, double(v));
  double z = 0;
  for (Real v : r) z += std::exp(double(v) - m);
  return double(r[std::size_t(label)]) - m - std::log(z);
}

// Criteria ------------------------------------------------------------------

Outcome greedy_equals_beam1() {
  Outcome o;
  CaseTask& task = case_task();
  TranslateSettings g, b;
  g.greedy = true;
  b.beam = 1;
  const Translator greedy(task.bundle, g), beam(task.bundle, b);
  const ToyCorpus inputs = nmt::test::case_corpus(kSeededInputs, 11);
  std::size_t same = 0;
  for (std::size_t i = 0; i < inputs.source.size(); ++i) {
    const SentenceInput in = input_of(tokenized(inputs, i));
    const Hypothesis a = greedy.search_chunk(in), c = beam.search_chunk(in);
    same += a.tokens == c.tokens && a.factors == c.factors;
  }
  o.note(std::to_string(same) + "/" + std::to_string(inputs.source.size()) + " token-identical");
  o.expect(same == inputs.source.size(), "greedy and beam 1 disagree");
  return o;
}

Outcome ssru_correctness() {
  Outcome o;
  const Tensor x({1, 1}, {1}), c_prev({1, 1}, {4}), zero({1, 1}, {0}), two({1, 1}, {2});
  const auto r = kernels::ssru_cell(x, c_prev, zero, Tensor({1}, {0}), two);
  o.expect(r.c[0] == 3.0f && r.h[0] == 3.0f, "d=1 example: c=" + fmt("%g", r.c[0]) + " h=" + fmt("%g", r.h[0]));
  const auto carry = kernels::ssru_cell(x, c_prev, zero, Tensor({1}, {20}), two);
  const auto open = kernels::ssru_cell(x, c_prev, zero, Tensor({1}, {-20}), two);
  o.expect(std::abs(double(carry.c[0]) - 4) <= kSaturatedTolerance, "saturated forget gate does not carry");
  o.expect(std::abs(double(open.c[0]) - 2) <= kSaturatedTolerance, "open forget gate does not pass W x");

  CaseTask& task = case_task();
  const InferenceModel im(task.bundle.model);
  double worst = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    const EncodedPair p = encode_pair(task.bundle.vocabs, task.test[i]);
    const Logits a = graph_logits(task.bundle.model, p), b = stepwise_logits(im, p);
    worst = std::max(worst, max_abs_diff(a.surface, b.surface));
    for (std::size_t f = 0; f < a.factors.size(); ++f) worst = std::max(worst, max_abs_diff(a.factors[f], b.factors[f]));
  }
  o.note("step-wise vs scan max diff " + fmt("%.2e", worst));
  o.expect(worst <= kStepwiseTolerance, "step-wise decoding departs from the scan");

  const auto& g = f64();
  if (!g.count("ssru_cell") || !g.count("layer_ssru")) {
    o.expect(false, "no finite-difference results");
  } else {
    o.note("grad_check cell " + fmt("%.2e", g.at("ssru_cell")) + ", model " + fmt("%.2e", g.at("layer_ssru")));
    o.expect(g.at("ssru_cell") < kGradTolerance && g.at("layer_ssru") < kGradTolerance, "SSRU gradients");
  }
  return o;
}

Outcome target_factors() {
  Outcome o;
  CaseTask& task = case_task();
  const Model& model = task.bundle.model;
  const InferenceModel im(model);
  double worst = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    const EncodedPair p = encode_pair(task.bundle.vocabs, task.test[i]);
    const Batch b = make_batch(std::vector<EncodedPair>{p});
    // Total from the training objective without smoothing or NVS term.
    Tape t;
    ParamBinding bind(t, model.params(), false);
    const LossResult loss = compute_loss(t, model.forward(t, bind, b), b, model.config(), 0.0, {}, 0.0);
    const double total = -loss.value * double(b.target_tokens);
    // Per-stream sums from step-wise decoding.
    const Logits s = stepwise_logits(im, p);
    double streams = 0;
    for (std::size_t pos = 0; pos < b.target_len; ++pos) {
      streams += row_log_prob(s.surface, pos, b.target_label[pos]);
      for (std::size_t f = 0; f < s.factors.size(); ++f) streams += row_log_prob(s.factors[f], pos, b.target_factor_label[f][pos]);
    }
    worst = std::max(worst, std::abs(total - streams));
  }
  o.note("log-prob decomposition max diff " + fmt("%.2e", worst));
  o.expect(worst <= kDecompositionTolerance, "joint log-prob is not the sum of stream log-probs");

  TranslateSettings s;
  s.greedy = true;
  const double acc = factor_accuracy(Translator(task.bundle, s), task.test);
  o.note("held-out factor accuracy " + fmt("%.4f", acc) + " after " + std::to_string(task.updates) + " updates (" +
         fmt("%.0f s", task.train_seconds) + " training)");
  o.expect(acc >= kFactorAccuracy, "factor accuracy");
  return o;
}

Outcome shortlists() {
  Outcome o;
  CaseTask& task = case_task();
  const Vocabularies& v = task.bundle.vocabs;
  std::vector<IdPair> corpus;
  for (std::size_t i = 0; i < task.train_corpus.source.size(); ++i) {
    const TokenizedPair p = tokenized(task.train_corpus, i);
    corpus.push_back({v.source.encode(p.source), v.target.encode(p.target)});
  }
  const Model1Result m1 = train_model1(corpus);
  const std::size_t V = task.bundle.model.config().target_vocab_size;

  // k >= |V|: the translator and an explicitly restricted search over every id.
  TranslateSettings plain, full;
  plain.greedy = full.greedy = true;
  full.shortlist = std::make_shared<Shortlist>(extract_shortlist(m1.table, V));
  const Translator a(task.bundle, plain), b(task.bundle, full);
  auto im = std::make_shared<const InferenceModel>(task.bundle.model);
  std::vector<int> all_ids(V);
  for (std::size_t i = 0; i < V; ++i) all_ids[i] = int(i);
  std::size_t same = 0;
  for (const auto& p : task.test) {
    const Hypothesis ha = a.search_chunk(input_of(p)), hb = b.search_chunk(input_of(p));
    std::vector<std::vector<int>> fac;
    for (std::size_t f = 0; f < p.source_factors.size(); ++f) fac.push_back(v.source_factors[f].encode(p.source_factors[f]));
    auto enc = std::make_shared<const EncoderOutput>(im->prepare(v.source.encode(p.source), fac));
    const Hypothesis hc = greedy_search(make_search_problem(im, enc, all_ids));
    same += ha.tokens == hb.tokens && ha.log_prob == hb.log_prob && ha.tokens == hc.tokens && ha.log_prob == hc.log_prob;
  }
  o.note("k>=|V|: " + std::to_string(same) + "/" + std::to_string(task.test.size()) + " identical");
  o.expect(same == task.test.size(), "full-size shortlist changed outputs");

  // k = 5: every output token must come from the rows of its source tokens.
  TranslateSettings five;
  five.greedy = true;
  auto sl = std::make_shared<Shortlist>(extract_shortlist(m1.table, 5));
  five.shortlist = sl;
  const Translator c(task.bundle, five);
  std::size_t tokens = 0, outside = 0;
  for (const auto& p : task.test) {
    std::set<int> allowed;
    for (int s : v.source.encode(p.source))
      for (int t : sl->row(s)) allowed.insert(t);
    for (int t : c.search_chunk(input_of(p)).tokens) {
      ++tokens;
      outside += allowed.count(t) == 0;
    }
  }
  o.note("k=5: " + std::to_string(outside) + " of " + std::to_string(tokens) + " output tokens outside the rows");
  o.expect(outside == 0, "shortlist soundness");

  std::size_t monotone = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<IdPair> rc;
    for (int i = 0; i < 200; ++i) {
      IdPair p;
      for (std::size_t j = 0, n = 1 + rng() % 8; j < n; ++j) p.first.push_back(int(4 + rng() % 30));
      for (std::size_t j = 0, n = 1 + rng() % 8; j < n; ++j) p.second.push_back(int(4 + rng() % 30));
      rc.push_back(p);
    }
    Model1Options opt;
    opt.iterations = 5;
    const auto ll = train_model1(rc, opt).log_likelihood;
    bool ok = ll.size() == 6;
    for (std::size_t i = 1; i < ll.size(); ++i) ok = ok && ll[i] >= ll[i - 1];
    monotone += ok;
  }
  o.note("EM likelihood non-decreasing on " + std::to_string(monotone) + "/10 corpora");
  o.expect(monotone == 10, "EM likelihood decreased");
  return o;
}

Outcome prefixes() {
  Outcome o;
  CaseTask& task = case_task();
  const Vocabulary& tv = task.bundle.vocabs.target;
  std::mt19937_64 rng(5);
  const ToyCorpus inputs = nmt::test::case_corpus(kPrefixInputs, 12);
  TranslateSettings g, b;
  g.greedy = true;
  b.beam = 4;
  const Translator greedy(task.bundle, g), beam(task.bundle, b);
  std::size_t forced = 0, stripped = 0;
  for (std::size_t i = 0; i < inputs.source.size(); ++i) {
    SentenceInput in = input_of(tokenized(inputs, i));
    for (std::size_t j = 0, n = 1 + rng() % 3; j < n; ++j)
      in.target_prefix.push_back(tv.token(int(tv.reserved() + rng() % (tv.size() - tv.reserved()))));
    const Translator& t = i % 2 ? beam : greedy;
    const TranslationRecord kept = t.translate(in);
    const auto words = tokens_of(kept.text);
    forced += words.size() >= in.target_prefix.size() &&
              std::equal(in.target_prefix.begin(), in.target_prefix.end(), words.begin());
    in.options.strip_prefix = true;
    const TranslationRecord s = t.translate(in);
    const std::size_t n = std::min(words.size(), in.target_prefix.size());
    stripped += s.text == join_tokens(std::vector<std::string>(words.begin() + long(n), words.end()));
  }
  o.note("prefix forced on " + std::to_string(forced) + "/" + std::to_string(kPrefixInputs) + ", strip ok on " +
         std::to_string(stripped));
  o.expect(forced == kPrefixInputs, "prefix not forced");
  o.expect(stripped == kPrefixInputs, "strip-prefix output");

  // An input three chunks long, with the prefix on the first chunk only or on all.
  SentenceInput longer;
  for (std::size_t i = 0; i < 40; ++i) {
    longer.tokens.push_back("s" + std::to_string(i % 64));
    if (longer.source_factors.empty()) longer.source_factors.resize(1);
    longer.source_factors[0].push_back("L");
  }
  longer.target_prefix = {tv.token(int(tv.reserved()))};
  const std::size_t max_seq = task.bundle.model.config().max_seq_len;
  for (bool all : {false, true}) {
    SentenceInput in = longer;
    in.options.prefix_all_chunks = all;
    const auto chunks = chunk_input(in, max_seq);
    std::size_t with_prefix = 0;
    std::vector<std::string> joined;
    for (const auto& c : chunks) {
      const auto words = tokens_of(greedy.translate(c).text);
      with_prefix += !c.target_prefix.empty() && !words.empty() && words[0] == longer.target_prefix[0];
      joined.insert(joined.end(), words.begin(), words.end());
    }
    const TranslationRecord r = greedy.translate(in);
    o.expect(chunks.size() == 3 && r.chunks == 3, "chunk count");
    o.expect(with_prefix == (all ? chunks.size() : 1), std::string("prefix on ") + (all ? "all chunks" : "first chunk"));
    o.expect(r.text == join_tokens(joined), "chunk outputs are not joined in order");
  }

  // The three documented JSON inputs; the source text is one line.
  const std::vector<std::string> examples{
      R"({"text": "The boy ate the waff@@ le .", "source_prefix": "<2DE>"})",
      R"({"text": "The boy ate the waff@@ le .", "target_prefix": "<2DE>"})",
      R"({"text": "The boy ate the waff@@ le .", "target_prefix": "<2DE>", "target_prefix_factors": ["O O B"]})"};
  std::size_t round_trips = 0;
  for (const auto& line : examples) {
    const SentenceInput in = parse_input_line(line);
    round_trips += in.tokens.size() == 7 && parse_input_line(input_to_json(in)) == in;
  }
  const SentenceInput third = parse_input_line(examples[2]);
  o.expect(parse_input_line(examples[0]).source_prefix == std::vector<std::string>{"<2DE>"}, "source prefix example");
  o.expect(third.target_prefix == std::vector<std::string>{"<2DE>"} &&
               third.target_prefix_factors == std::vector<std::vector<std::string>>{{"O", "O", "B"}},
           "prefix factor example");
  o.note("JSON examples round-tripped: " + std::to_string(round_trips) + "/3");
  o.expect(round_trips == 3, "JSON round trip");
  return o;
}

// Random model whose decoder never prefers EOS, so every output runs to the
// length limit.
std::shared_ptr<const InferenceModel> timing_model(std::size_t enc, std::size_t dec, DecoderKind kind,
                                                   Precision precision = Precision::fp32) {
  ModelConfig c;
  c.d_model = 512;
  c.heads = 8;
  c.ff_dim = 2048;
  c.encoder_layers = enc;
  c.decoder_layers = dec;
  c.decoder_kind = kind;
  c.source_vocab_size = 1000;
  c.target_vocab_size = 1000;
  c.max_seq_len = 100;
  Model m = Model::initialize(c, 21);
  m.params().at("decoder.output.surface_bias")[kEosId] = -1e4f;
  return std::make_shared<const InferenceModel>(m, precision);
}

// Best of `rounds` timings of each model, interleaved.
std::vector<double> sentences_per_second(const std::vector<std::shared_ptr<const InferenceModel>>& models,
                                         const std::vector<std::vector<int>>& sources, std::size_t rounds,
                                         std::size_t* mean_length = nullptr) {
  std::vector<double> best(models.size(), 0);
  BenchOptions greedy;
  for (std::size_t r = 0; r < rounds; ++r)
    for (std::size_t i = 0; i < models.size(); ++i) {
      const BenchReport rep = benchmark(models[i], sources, greedy);
      best[i] = std::max(best[i], rep.sentences_per_second());
      if (mean_length) *mean_length = std::size_t(rep.mean_output_length()) - 1;  // without EOS
    }
  return best;
}

Outcome int8_quantization() {
  Outcome o;
  CaseTask& task = case_task();
  std::size_t weights = 0, violations = 0;
  for (const auto& [name, w] : task.bundle.model.params().tensors()) {
    if (w.rank() != 2 || name.find(".embed.") != std::string::npos) continue;
    const Tensor wt = kernels::transpose(w);
    const QuantizedMatrix q = quantize_rows(wt);
    for (std::size_t r = 0; r < q.rows; ++r)
      for (std::size_t c = 0; c < q.cols; ++c) {
        ++weights;
        const double err = std::abs(double(q.values[r * q.cols + c]) * double(q.scales[r]) - double(wt.at(r, c)));
        violations += err > double(q.scales[r]) / 2;
      }
  }
  o.note(std::to_string(violations) + " of " + std::to_string(weights) + " weights beyond scale/2");
  o.expect(violations == 0, "round-trip bound");

  TranslateSettings f, q;
  f.greedy = q.greedy = true;
  q.precision = Precision::int8;
  const Translator fp(task.bundle, f), i8(task.bundle, q);
  std::size_t same = 0;
  for (const auto& p : task.test) {
    const TranslationRecord a = fp.translate(input_of(p)), b = i8.translate(input_of(p));
    same += a.text == b.text && a.factors == b.factors;
  }
  const double agreement = double(same) / double(task.test.size());
  o.note("INT8 matches FP32 on " + fmt("%.3f", agreement) + " of held-out sentences");
  o.expect(agreement >= kInt8Agreement, "INT8 agreement");

  const auto sources = synthetic_sources(1000, 4, 20, 3);
  std::size_t length = 0;
  const auto sps = sentences_per_second({timing_model(6, 2, DecoderKind::self_attention),
                                         timing_model(6, 2, DecoderKind::self_attention, Precision::int8)},
                                        sources, 3, &length);
  o.note("d=512 6:2 greedy: FP32 " + fmt("%.1f ms", 1000 / sps[0]) + ", INT8 " + fmt("%.1f ms", 1000 / sps[1]) +
         " per sentence (output length " + std::to_string(length) + ")");
  o.expect(sps[1] > sps[0], "INT8 is not faster");
  return o;
}

Outcome architecture_ordering() {
  Outcome o;
  ModelConfig base;
  base.d_model = 512;
  base.heads = 8;
  base.ff_dim = 2048;
  base.source_vocab_size = base.target_vocab_size = 1000;
  ModelConfig six = base, deep = base, deep_ssru = base;
  six.encoder_layers = six.decoder_layers = 6;
  deep.encoder_layers = deep_ssru.encoder_layers = 20;
  deep.decoder_layers = deep_ssru.decoder_layers = 2;
  deep_ssru.decoder_kind = DecoderKind::ssru;
  bool analytic = true;
  for (std::size_t step = 20; step < 60; ++step) {
    const auto a = decoder_step_cost(deep_ssru, step, 20).total(), b = decoder_step_cost(deep, step, 20).total(),
               c = decoder_step_cost(six, step, 20).total();
    analytic = analytic && a <= b && b < c;
  }
  o.note("step-20 cost 20:2+SSRU " + std::to_string(decoder_step_cost(deep_ssru, 20, 20).total()) + ", 20:2 " +
         std::to_string(decoder_step_cost(deep, 20, 20).total()) + ", 6:6 " +
         std::to_string(decoder_step_cost(six, 20, 20).total()));
  o.expect(analytic, "analytic step cost ordering");

  const auto sources = synthetic_sources(1000, 4, 20, 4);
  std::size_t length = 0;
  const auto sps = sentences_per_second({timing_model(20, 2, DecoderKind::ssru),
                                         timing_model(20, 2, DecoderKind::self_attention),
                                         timing_model(6, 6, DecoderKind::self_attention)},
                                        sources, 3, &length);
  o.note("sentences/s 20:2+SSRU " + fmt("%.2f", sps[0]) + ", 20:2 " + fmt("%.2f", sps[1]) + ", 6:6 " +
         fmt("%.2f", sps[2]) + " (output length " + std::to_string(length) + ")");
  o.expect(length >= 20, "outputs shorter than 20 tokens");
  o.expect(sps[0] >= sps[1] && sps[1] > sps[2], "measured speed ordering");
  return o;
}

using Row = std::vector<std::string>;

std::vector<Row> shard_rows(const fs::path& dir) {
  const Manifest m = Manifest::load(dir / "manifest.json");
  const Vocabularies v = Vocabularies::load(dir);
  std::vector<Row> out;
  for (std::size_t s = 0; s < m.shards.size(); ++s)
    for (const auto& p : read_shard(dir, m, s)) {
      Row r{join_tokens(v.source.decode(p.source)), join_tokens(v.target.decode(p.target))};
      for (std::size_t f = 0; f < p.source_factors.size(); ++f)
        r.push_back(join_tokens(v.source_factors[f].decode(p.source_factors[f])));
      for (std::size_t f = 0; f < p.target_factors.size(); ++f)
        r.push_back(join_tokens(v.target_factors[f].decode(std::vector<int>(p.target_factors[f].begin() + 1, p.target_factors[f].end()))));
      out.push_back(r);
    }
  std::sort(out.begin(), out.end());
  return out;
}

// Peak id storage over one epoch, and the largest batch seen.
std::pair<std::size_t, std::size_t> epoch_peak(const fs::path& dir, std::size_t batch_tokens) {
  ShardIterator it(dir, batch_tokens, 1);
  std::size_t largest = 0;
  while (auto batch = it.next()) {
    std::size_t bytes = 0;
    for (const auto& p : *batch) bytes += pair_bytes(p);
    largest = std::max(largest, bytes);
  }
  return {it.peak_bytes(), largest};
}

Outcome data_prep() {
  Outcome o;
  TempDir dir;
  ToyCorpus c = nmt::test::case_corpus(4000, 21);
  // Lengths around the filter boundary.
  std::mt19937_64 rng(3);
  for (std::size_t len : {94, 95, 96, 97, 95, 200}) {
    std::string s, t, f;
    for (std::size_t j = 0; j < len; ++j) {
      const std::string sep = j ? " " : "";
      s += sep + "s" + std::to_string(rng() % 64);
      t += sep + "t" + std::to_string(rng() % 64);
      f += sep + "L";
    }
    c.source.push_back(s);
    c.target.push_back(t);
    c.source_factors[0].push_back(f);
    c.target_factors[0].push_back(f);
  }
  std::vector<Row> expected;
  std::size_t boundary_kept = 0;
  for (std::size_t i = 0; i < c.source.size(); ++i) {
    const std::size_t n = tokenize(c.source[i]).size();
    if (n > 95 || tokenize(c.target[i]).size() > 95) continue;
    boundary_kept += n >= 94;
    expected.push_back({c.source[i], c.target[i], c.source_factors[0][i], c.target_factors[0][i]});
  }
  std::sort(expected.begin(), expected.end());

  PrepareOptions eight = prepare_options(dir.path(), "c", c, 8);
  eight.workers = 1;
  const Manifest m = prepare_shards(eight);
  o.expect(shard_rows(eight.output) == expected, "shard multiset differs from the filtered corpus");
  o.expect(m.dropped_pairs == 3 && boundary_kept == 3, "95-token filter boundary");
  o.note(std::to_string(m.sentences()) + " pairs kept, " + std::to_string(m.dropped_pairs) + " dropped");

  PrepareOptions again = eight;
  again.output = dir / "again";
  again.workers = 4;
  prepare_shards(again);
  std::size_t files = 0, identical = 0;
  for (const auto& e : fs::directory_iterator(eight.output)) {
    ++files;
    identical += nmt::test::read_file(e.path()) == nmt::test::read_file(again.output / e.path().filename());
  }
  o.note(std::to_string(identical) + "/" + std::to_string(files) + " files byte-identical on rerun");
  o.expect(files > 0 && identical == files, "reruns differ");

  // 1-shard run over the pairs of the largest of the 8 shards.
  std::size_t largest = 0, largest_bytes = 0;
  for (std::size_t s = 0; s < 8; ++s) {
    std::size_t bytes = 0;
    for (const auto& p : read_shard(eight.output, m, s)) bytes += pair_bytes(p);
    if (bytes > largest_bytes) {
      largest_bytes = bytes;
      largest = s;
    }
  }
  ToyCorpus part;
  part.source_factors.resize(1);
  part.target_factors.resize(1);
  for (std::size_t i = 0; i < c.source.size(); ++i)
    if (shard_of(eight.seed, i, 8) == largest) {
      part.source.push_back(c.source[i]);
      part.target.push_back(c.target[i]);
      part.source_factors[0].push_back(c.source_factors[0][i]);
      part.target_factors[0].push_back(c.target_factors[0][i]);
    }
  const PrepareOptions one = prepare_options(dir.path(), "part", part, 1);
  prepare_shards(one);
  const auto [peak8, batch8] = epoch_peak(eight.output, 1024);
  const auto [peak1, batch1] = epoch_peak(one.output, 1024);
  const std::size_t one_batch = std::max(batch8, batch1);
  const std::size_t gap = peak8 > peak1 ? peak8 - peak1 : peak1 - peak8;
  PrepareOptions whole = prepare_options(dir.path(), "whole", c, 1);
  prepare_shards(whole);
  const std::size_t peak_whole = epoch_peak(whole.output, 1024).first;
  o.note("peak bytes: 8 shards " + std::to_string(peak8) + ", 1 shard of the same data " + std::to_string(peak1) +
         " (batch " + std::to_string(one_batch) + "), whole corpus in 1 shard " + std::to_string(peak_whole));
  o.expect(gap <= one_batch, "8-shard peak is not within one batch of the 1-shard run");
  return o;
}

// Copy task trained from scratch; accuracy from greedy outputs aligned
// with the reference.
Outcome training_and_freezing() {
  Outcome o;
  TempDir dir;
  const ToyCorpus corpus = nmt::test::copy_corpus(8000, 31, 20, 10);
  const ToyCorpus dev = nmt::test::copy_corpus(100, 32, 20, 10), test = nmt::test::copy_corpus(300, 33, 20, 10);
  prepare_shards(prepare_options(dir.path(), "copy", corpus, 4));
  const Vocabularies v = Vocabularies::load(dir / "copy.prepared");
  TrainInputs in;
  in.data_dir = dir / "copy.prepared";
  in.output_dir = dir / "model";
  ModelConfig& m = in.model;
  m.d_model = 64;
  m.heads = 4;
  m.ff_dim = 256;
  m.encoder_layers = 2;
  m.decoder_layers = 2;
  m.source_vocab_size = v.source.size();
  m.target_vocab_size = v.target.size();
  m.max_seq_len = 16;
  for (std::size_t i = 0; i < dev.source.size(); ++i) in.validation.push_back(encode_pair(v, tokenized(dev, i)));
  TrainConfig t;
  t.max_updates = kCopyUpdateBudget;
  t.checkpoint_interval = 500;
  t.average_best = 2;
  t.batch_tokens = 1024;
  t.warmup = 200;
  t.learning_rate = 2e-3;
  const auto start = std::chrono::steady_clock::now();
  const TrainResult r = train(in, t);
  const double secs = seconds_since(start);
  TranslateSettings g;
  g.greedy = true;
  const Translator tr(load_model(in.output_dir), g);
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 0; i < test.source.size(); ++i) {
    const auto ref = tokenize(test.target[i]);
    const auto out = tokenize(tr.translate(parse_input_line(test.source[i])).text);
    for (std::size_t j = 0; j < ref.size(); ++j) {
      ++total;
      correct += j < out.size() && out[j] == ref[j];
    }
  }
  const double acc = double(correct) / double(total);
  o.note("copy accuracy " + fmt("%.4f", acc) + " after " + std::to_string(r.updates) + " updates (" + fmt("%.0f s", secs) + ")");
  o.expect(r.updates <= kCopyUpdateBudget && acc >= kCopyAccuracy, "copy task accuracy");

  // Everything frozen: a short run leaves the parameters bit-identical.
  TrainInputs frozen = in;
  frozen.output_dir = dir / "frozen";
  TrainConfig ft = t;
  ft.max_updates = 20;
  ft.checkpoint_interval = 20;
  ft.freeze = {"*"};
  train(frozen, ft);
  o.expect(nmt::test::read_file(frozen.output_dir / "params.00020") ==
               nmt::test::read_file(frozen.output_dir / "params.00000"),
           "frozen parameters changed");

  // Backward work with and without a frozen encoder.
  Model model = load_model(in.output_dir).model;
  std::vector<EncodedPair> pairs;
  for (std::size_t i = 0; i < 4; ++i) pairs.push_back(encode_pair(v, tokenized(test, i)));
  const Batch b = make_batch(pairs);
  auto backward_ops = [&] {
    Tape tape;
    ParamBinding bind(tape, model.params());
    const LossResult l = compute_loss(tape, model.forward(tape, bind, b), b, model.config(), 0.1);
    tape.backward(l.loss);
    return tape.backward_ops();
  };
  const std::size_t all_ops = backward_ops();
  freeze_params(model.params(), std::vector<std::string>{"encoder.*"});
  const std::size_t frozen_ops = backward_ops();
  o.note("backward ops " + std::to_string(all_ops) + " unfrozen, " + std::to_string(frozen_ops) + " encoder frozen");
  o.expect(frozen_ops < all_ops, "freezing the encoder does not reduce backward work");

  ModelParams one, three;
  one.add("w", Tensor({2, 2}, 1.0f));
  three.add("w", Tensor({2, 2}, 3.0f));
  save_params(one, dir / "one");
  save_params(three, dir / "three");
  const ModelParams avg = average_checkpoints(std::vector<CheckpointRecord>{{1, 0.5, dir / "one"}, {2, 0.6, dir / "three"}}, 2);
  o.expect(avg.at("w") == Tensor({2, 2}, 2.0f), "average of 1.0 and 3.0 is not 2.0");
  return o;
}

Outcome vocabulary_selection() {
  Outcome o;
  CaseTask& task = case_task();
  const InferenceModel im(task.bundle.model);
  const Vocabularies& v = task.bundle.vocabs;
  const std::size_t V = im.config().target_vocab_size;
  const std::vector<int> specials{kPadId, kUnkId, kEosId};
  std::size_t full = 0, minimal = 0, found = 0, wanted = 0, selected = 0, covered = 0;
  for (const auto& p : task.test) {
    std::vector<std::vector<int>> fac;
    for (std::size_t f = 0; f < p.source_factors.size(); ++f) fac.push_back(v.source_factors[f].encode(p.source_factors[f]));
    const EncoderOutput enc = im.prepare(v.source.encode(p.source), fac);
    full += im.nvs_select(enc, 0.0f, specials).size() == V;
    minimal += im.nvs_select(enc, 1.0f, specials) == specials;
    const auto half = im.nvs_select(enc, 0.5f, specials);
    selected += half.size();
    bool all = true;
    for (int t : v.target.encode(p.target)) {
      const bool in = std::binary_search(half.begin(), half.end(), t);
      ++wanted;
      found += in;
      all = all && in;
    }
    covered += all;
  }
  const double n = double(task.test.size());
  const double recall = double(found) / double(wanted), fraction = double(selected) / n / double(V);
  o.expect(full == task.test.size(), "threshold 0 does not select the full vocabulary");
  o.expect(minimal == task.test.size(), "threshold 1 selects more than the specials");
  o.note("recall " + fmt("%.4f", recall) + ", mean selection " + fmt("%.1f", double(selected) / n) + " of " +
         std::to_string(V) + " ids, whole reference covered for " + fmt("%.3f", double(covered) / n) + " of sentences");
  o.expect(recall >= kNvsRecall, "NVS recall");
  o.expect(fraction < kNvsVocabFraction, "NVS selection too large");
  return o;
}

Outcome gradient_suite() {
  Outcome o;
  const auto& g = f64();
  std::size_t kinds = 0;
  for (const auto& [name, err] : g) {
    if (!name.starts_with("layer_")) continue;
    ++kinds;
    o.note(name.substr(6) + " " + fmt("%.1e", err));
    o.expect(err < kGradTolerance, name.substr(6));
  }
  o.expect(kinds == 7, "expected 7 layer kinds, got " + std::to_string(kinds));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  // Optional criterion numbers restrict the run.
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"greedy equals beam 1", greedy_equals_beam1},
      {"SSRU correctness", ssru_correctness},
      {"target factor decomposition and accuracy", target_factors},
      {"lexical shortlists", shortlists},
      {"prefix forcing", prefixes},
      {"INT8 quantization", int8_quantization},
      {"architecture speed ordering", architecture_ordering},
      {"data preparation integrity", data_prep},
      {"training and freezing", training_and_freezing},
      {"vocabulary selection", vocabulary_selection},
      {"gradient suite", gradient_suite},
  };
  {
    // Shared by criteria 1-6 and 10; timed separately.
    const auto start = std::chrono::steady_clock::now();
    const CaseTask& task = case_task();
    std::printf("setup: case-factor model trained for %zu updates in %.1f s (%.1f s total)\n", task.updates,
                task.train_seconds, seconds_since(start));
    std::fflush(stdout);
  }
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.expect(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " ("
         << fmt("%.1f s", seconds_since(start)) << ")";
    for (const auto& n : o.notes) line << "; " << n;
    std::printf("%s\n", line.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed;
}
