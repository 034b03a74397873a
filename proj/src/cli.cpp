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

#include "nmt/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "nmt/bench.hpp"
#include "nmt/config.hpp"
#include "nmt/cost.hpp"
#include "nmt/error.hpp"
#include "nmt/lexical.hpp"
#include "nmt/shards.hpp"
#include "nmt/trainer.hpp"
#include "nmt/translate.hpp"

namespace nmt::cli {

namespace fs = std::filesystem;

namespace {

struct PrepareArgs {
  PrepareOptions options;
};

struct TrainArgs {
  std::string data, valid_source, valid_target, output, params;
  std::vector<std::string> valid_source_factors, valid_target_factors, freeze;
  ModelConfig model;
  std::string decoder = "self_attention";
  std::string factor_combine = "sum";
  std::size_t factor_dim = 0;
  TrainConfig train;
  bool no_prefetch = false;
  bool show_config = false;
};

struct TranslateArgs {
  std::string model, params, shortlist, quantize = "none";
  bool greedy = false;
  std::size_t beam = 5;
  double length_alpha = 1.0;
  std::optional<double> nvs_threshold;
  bool json = false, strip_prefix = false, prefix_all_chunks = false, show_config = false;
  std::size_t batch_size = 16;
};

struct ShortlistArgs {
  std::string source, target, output;
  std::size_t k = Shortlist::kDefaultK;
  std::size_t iterations = 5;
};

struct BenchArgs {
  std::string model, config, input, quantize = "none";
  bool greedy = false;
  std::size_t beam = 5;
  std::size_t sentences = 100, source_len = 20, repeats = 1;
  std::uint64_t seed = 13;
  bool show_config = false;
};

Precision parse_precision(const std::string& s) {
  if (s == "none" || s == "float32") return Precision::fp32;
  if (s == "float16") return Precision::fp16;
  if (s == "int8") return Precision::int8;
  throw ConfigError("unknown quantization '" + s + "'");
}

std::vector<fs::path> paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

int prepare_data(const PrepareArgs& a, std::ostream& out) {
  const Manifest m = prepare_shards(a.options);
  out << "sentences\t" << m.sentences() << "\ndropped\t" << m.dropped_pairs << "\nshards\t" << m.shards.size()
      << '\n';
  return kExitOk;
}

std::vector<EncodedPair> read_validation(const TrainArgs& a, const Vocabularies& vocabs, std::size_t max_len,
                                         std::ostream& err) {
  const auto raw = read_parallel(a.valid_source, a.valid_target, paths(a.valid_source_factors),
                                 paths(a.valid_target_factors));
  std::vector<EncodedPair> out;
  std::size_t skipped = 0;
  for (const auto& p : raw) {
    if (p.source.empty() || p.target.empty() || p.source.size() > max_len || p.target.size() > max_len) {
      ++skipped;
      continue;
    }
    out.push_back(encode_pair(vocabs, p));
  }
  if (skipped) err << "warning: skipped " << skipped << " validation pairs (empty or longer than " << max_len << ")\n";
  if (out.empty()) throw DataError("no usable validation pairs in " + a.valid_source);
  return out;
}

int train_command(TrainArgs a, std::ostream& out, std::ostream& err) {
  const Vocabularies vocabs = Vocabularies::load(a.data);
  ModelConfig& c = a.model;
  c.decoder_kind = parse_decoder_kind(a.decoder);
  c.source_vocab_size = vocabs.source.size();
  c.target_vocab_size = vocabs.target.size();
  const FactorCombine combine = parse_factor_combine(a.factor_combine);
  c.source_factor_specs.clear();
  for (const auto& v : vocabs.source_factors)
    c.source_factor_specs.push_back(
        {v.size(), combine == FactorCombine::sum ? c.d_model : (a.factor_dim ? a.factor_dim : 8), combine});
  c.target_factor_specs.clear();
  for (const auto& v : vocabs.target_factors) c.target_factor_specs.push_back({v.size()});
  c.validate();
  if (a.show_config) {
    out << config_to_text(c);
    return kExitOk;
  }
  a.train.freeze = a.freeze;
  a.train.prefetch = !a.no_prefetch;
  TrainInputs in{a.data, a.output, c, read_validation(a, vocabs, c.max_seq_len, err), a.params};
  const TrainResult r = train(in, a.train, [&err](std::size_t update, const LossResult& loss) {
    if (update % 100 == 0) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "update %zu\tloss %.4f\n", update, loss.value);
      err << buf;
    }
  });
  for (const auto& cp : r.checkpoints) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "checkpoint %zu\tvalidation %.6f\n", cp.update, cp.validation_loss);
    err << buf;
  }
  out << "updates\t" << r.updates << "\naveraged\t" << r.averaged.string() << '\n';
  return kExitOk;
}

int translate_command(const TranslateArgs& a, std::istream& in, std::ostream& out, std::ostream& err) {
  const ModelBundle bundle = load_model(a.model, a.params);
  if (a.show_config) {
    out << config_to_text(bundle.model.config());
    return kExitOk;
  }
  TranslateSettings s;
  s.precision = parse_precision(a.quantize);
  s.greedy = a.greedy;
  s.beam = a.beam;
  s.length_alpha = a.length_alpha;
  s.batch_size = a.batch_size;
  if (!a.shortlist.empty())
    s.shortlist = std::make_shared<const Shortlist>(Shortlist::load(a.shortlist, bundle.vocabs.source, bundle.vocabs.target));
  if (a.nvs_threshold) s.nvs_threshold = Real(*a.nvs_threshold);
  const Translator translator(bundle, s);
  const InputOptions options{a.prefix_all_chunks, a.strip_prefix};
  int status = kExitOk;
  std::size_t line_no = 0;
  std::vector<std::string> lines;
  auto flush = [&] {
    for (const auto& r : translator.translate_lines(lines, options)) {
      ++line_no;
      for (const auto& w : r.warnings) err << "line " << line_no << ": warning: " << w << '\n';
      if (!r.error.empty()) {
        err << "line " << line_no << ": error: " << r.error << '\n';
        status = kExitData;
      }
      out << format_record(r, a.json) << '\n';
    }
    out.flush();
    lines.clear();
  };
  for (std::string line; std::getline(in, line);) {
    lines.push_back(line);
    if (lines.size() == std::max<std::size_t>(1, a.batch_size)) flush();
  }
  flush();
  return status;
}

int shortlist_command(const ShortlistArgs& a, std::ostream& out, std::ostream& err) {
  const auto raw = read_parallel(a.source, a.target);
  std::vector<std::vector<std::string>> src, trg;
  for (const auto& p : raw) {
    src.push_back(p.source);
    trg.push_back(p.target);
  }
  const Vocabulary sv = build_vocab(src);
  const Vocabulary tv = build_vocab(trg);
  std::vector<IdPair> corpus;
  for (const auto& p : raw)
    if (!p.source.empty() && !p.target.empty()) corpus.push_back({sv.encode(p.source), tv.encode(p.target)});
  Model1Options opt;
  opt.iterations = a.iterations;
  const Model1Result r = train_model1(corpus, opt);
  for (std::size_t i = 0; i < r.log_likelihood.size(); ++i) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "iteration %zu\tlog-likelihood %.6f\n", i, r.log_likelihood[i]);
    err << buf;
  }
  extract_shortlist(r.table, a.k).save(a.output, sv, tv);
  out << "pairs\t" << corpus.size() << "\nsource_types\t" << sv.size() << "\ntarget_types\t" << tv.size() << '\n';
  return kExitOk;
}

int bench_command(const BenchArgs& a, std::ostream& out) {
  if (a.model.empty() == a.config.empty()) throw ConfigError("bench needs exactly one of --model or --config");
  std::optional<Model> model;
  std::optional<Vocabularies> vocabs;
  if (!a.model.empty()) {
    ModelBundle b = load_model(a.model);
    model.emplace(std::move(b.model));
    vocabs.emplace(std::move(b.vocabs));
  } else {
    model.emplace(Model::initialize(load_config(a.config), a.seed));
  }
  const ModelConfig& c = model->config();
  if (a.show_config) {
    out << config_to_text(c);
    return kExitOk;
  }
  std::vector<std::vector<int>> sources;
  if (!a.input.empty()) {
    if (!vocabs) throw ConfigError("--input needs --model for its vocabulary");
    std::ifstream in(a.input);
    if (!in) throw DataError("cannot read " + a.input);
    for (std::string line; std::getline(in, line);) {
      auto tokens = tokenize(line);
      if (tokens.empty()) continue;
      if (tokens.size() > c.max_seq_len) tokens.resize(c.max_seq_len);
      sources.push_back(vocabs->source.encode(tokens));
    }
  } else {
    sources = synthetic_sources(c.source_vocab_size, a.sentences, std::min(a.source_len, c.max_seq_len), a.seed);
  }
  if (sources.empty()) throw DataError("no benchmark sentences");
  auto inference = std::make_shared<const InferenceModel>(*model, parse_precision(a.quantize));
  const BenchReport r = benchmark(inference, sources, {a.greedy, a.beam, a.repeats});
  std::size_t source_tokens = 0;
  for (const auto& s : sources) source_tokens += s.size();
  const std::size_t src_len = source_tokens / sources.size();
  const std::size_t step = std::max<std::size_t>(1, std::size_t(r.mean_output_length() + 0.5));
  const StepCost cost = decoder_step_cost(c, step, src_len);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "sentences\t%zu\nseconds\t%.6f\nsentences_per_sec\t%.3f\ntokens_per_sec\t%.3f\n"
                "mean_output_len\t%.2f\n",
                r.sentences, r.seconds, r.sentences_per_second(), r.tokens_per_second(), r.mean_output_length());
  out << buf;
  out << "decoder_step_cost\t" << cost.total() << "\ndecoder_step_cost_layers\t" << cost.layers()
      << "\nencoder_cost\t" << encoder_cost(c, src_len) << "\nsentence_cost\t"
      << sentence_cost(c, src_len, step) << '\n';
  return kExitOk;
}

// CLI11 short names are single characters; map the two-letter validation
// flags onto their long forms.
std::vector<std::string> normalize(std::vector<std::string> args) {
  for (auto& a : args) {
    if (a == "-vs") a = "--validation-source";
    if (a == "-vt") a = "--validation-target";
  }
  return args;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compact neural machine translation toolkit", "nmt"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare-data", "Filter, encode and shard a parallel corpus");
  p->add_option("-s,--source", prep.options.source, "Tokenized source file")->required();
  p->add_option("-t,--target", prep.options.target, "Tokenized target file")->required();
  p->add_option("-o,--output", prep.options.output, "Output directory")->required();
  p->add_option("--source-factors", prep.options.source_factors, "Source factor files")->delimiter(',');
  p->add_option("--target-factors", prep.options.target_factors, "Target factor files")->delimiter(',');
  p->add_option("--num-shards", prep.options.num_shards, "Number of shards")->capture_default_str()->check(CLI::PositiveNumber);
  p->add_option("--seed", prep.options.seed, "Shard assignment seed")->capture_default_str();
  p->add_option("--max-len", prep.options.max_len, "Drop pairs longer than this on either side")->capture_default_str();
  p->add_option("--min-count", prep.options.min_count, "Minimum token count for the vocabularies")->capture_default_str();
  p->add_option("--max-vocab", prep.options.max_vocab, "Vocabulary size cap including reserved ids (0: none)")
      ->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on prepared data");
  t->add_option("-d,--prepared-data", tr.data, "Prepared data directory")->required();
  t->add_option("--validation-source", tr.valid_source, "Validation source file (also -vs)")->required();
  t->add_option("--validation-target", tr.valid_target, "Validation target file (also -vt)")->required();
  t->add_option("--validation-source-factors", tr.valid_source_factors, "Validation source factor files")->delimiter(',');
  t->add_option("--validation-target-factors", tr.valid_target_factors, "Validation target factor files")->delimiter(',');
  t->add_option("-o,--output", tr.output, "Model directory")->required();
  t->add_option("--params", tr.params, "Start from this checkpoint");
  t->add_option("--max-updates", tr.train.max_updates, "Optimizer steps")->capture_default_str();
  t->add_option("--checkpoint-interval", tr.train.checkpoint_interval, "Updates between checkpoints")->capture_default_str();
  t->add_option("--freeze", tr.freeze, "Preset name or parameter-name glob patterns")->delimiter(',');
  t->add_option("--decoder", tr.decoder, "Decoder kind")->check(CLI::IsMember({"self_attention", "ssru"}))->capture_default_str();
  t->add_option("--encoder-layers", tr.model.encoder_layers, "Encoder layers")->capture_default_str();
  t->add_option("--decoder-layers", tr.model.decoder_layers, "Decoder layers")->capture_default_str();
  t->add_option("--model-size", tr.model.d_model, "Model width")->capture_default_str();
  t->add_option("--heads", tr.model.heads, "Attention heads")->capture_default_str();
  t->add_option("--ff-size", tr.model.ff_dim, "Feed-forward width")->capture_default_str();
  t->add_option("--max-seq-len", tr.model.max_seq_len, "Longest source chunk")->capture_default_str();
  t->add_flag("--nvs", tr.model.nvs_enabled, "Add a vocabulary selection head");
  t->add_option("--source-factors-combine", tr.factor_combine, "Combine rule for source factors")
      ->check(CLI::IsMember({"sum", "concat"}))->capture_default_str();
  t->add_option("--source-factors-dim", tr.factor_dim, "Embedding width of concatenated source factors (default 8)");
  t->add_option("--learning-rate", tr.train.learning_rate, "Peak learning rate")->capture_default_str();
  t->add_option("--warmup", tr.train.warmup, "Warmup updates")->capture_default_str();
  t->add_option("--label-smoothing", tr.train.label_smoothing, "Label smoothing")->capture_default_str();
  t->add_option("--factor-loss-weights", tr.train.factor_loss_weights, "Loss weight per target factor")->delimiter(',');
  t->add_option("--nvs-loss-weight", tr.train.nvs_loss_weight, "Loss weight of the selection head")->capture_default_str();
  t->add_option("--average-best", tr.train.average_best, "Checkpoints averaged into params.best")->capture_default_str();
  t->add_option("--batch-tokens", tr.train.batch_tokens, "Padded target tokens per batch")->capture_default_str();
  t->add_option("--seed", tr.train.seed, "Initialization and batching seed")->capture_default_str();
  t->add_flag("--no-prefetch", tr.no_prefetch, "Prepare batches on the update thread");
  t->add_flag("--show-config", tr.show_config, "Print the resolved model configuration and exit");

  TranslateArgs ta;
  auto* x = app.add_subcommand("translate", "Translate stdin to stdout, one sentence per line");
  x->add_option("-m,--model", ta.model, "Model directory")->required();
  x->add_option("--params", ta.params, "Parameter file (default params.best)");
  auto* beam = x->add_option("--beam", ta.beam, "Beam size")->capture_default_str()->check(CLI::PositiveNumber);
  x->add_flag("--greedy", ta.greedy, "Greedy search")->excludes(beam);
  x->add_option("--length-penalty-alpha", ta.length_alpha, "Length normalization exponent")->capture_default_str();
  auto* sl = x->add_option("--shortlist", ta.shortlist, "Lexical shortlist file");
  x->add_option("--nvs-threshold", ta.nvs_threshold, "Vocabulary selection threshold")
      ->check(CLI::Range(0.0, 1.0))->excludes(sl);
  x->add_option("--quantize", ta.quantize, "Inference precision")
      ->check(CLI::IsMember({"none", "float32", "float16", "int8"}))->capture_default_str();
  x->add_flag("--json", ta.json, "JSON output records");
  x->add_flag("--strip-prefix", ta.strip_prefix, "Remove the target prefix from outputs");
  x->add_flag("--target-prefix-all-chunks", ta.prefix_all_chunks, "Force the target prefix on every chunk");
  x->add_option("--batch-size", ta.batch_size, "Sentences per worker batch")->capture_default_str()->check(CLI::PositiveNumber);
  x->add_flag("--show-config", ta.show_config, "Print the model configuration and exit");

  ShortlistArgs sa;
  auto* s = app.add_subcommand("build-shortlist", "Align a corpus with IBM Model 1 and write a top-k shortlist");
  s->add_option("-s,--source", sa.source, "Tokenized source file")->required();
  s->add_option("-t,--target", sa.target, "Tokenized target file")->required();
  s->add_option("-o,--output", sa.output, "Shortlist file")->required();
  s->add_option("--k", sa.k, "Entries per source token")->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--iterations", sa.iterations, "EM iterations")->capture_default_str();

  BenchArgs ba;
  auto* b = app.add_subcommand("bench", "Time batch-1 decoding and report analytic step cost");
  b->add_option("-m,--model", ba.model, "Model directory");
  b->add_option("--config", ba.config, "Model configuration file (random weights)");
  b->add_option("-i,--input", ba.input, "Tokenized input file (default: random sentences)");
  auto* bbeam = b->add_option("--beam", ba.beam, "Beam size")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_flag("--greedy", ba.greedy, "Greedy search")->excludes(bbeam);
  b->add_option("--quantize", ba.quantize, "Inference precision")
      ->check(CLI::IsMember({"none", "float32", "float16", "int8"}))->capture_default_str();
  b->add_option("--sentences", ba.sentences, "Random sentences")->capture_default_str();
  b->add_option("--source-len", ba.source_len, "Random sentence length")->capture_default_str();
  b->add_option("--repeats", ba.repeats, "Passes over the input")->capture_default_str()->check(CLI::PositiveNumber);
  b->add_option("--seed", ba.seed, "Seed for weights and random sentences")->capture_default_str();
  b->add_flag("--show-config", ba.show_config, "Print the model configuration and exit");

  std::vector<std::string> args = normalize(raw_args);
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (p->parsed()) return prepare_data(prep, out);
    if (t->parsed()) return train_command(tr, out, err);
    if (x->parsed()) return translate_command(ta, in, out, err);
    if (s->parsed()) return shortlist_command(sa, out, err);
    if (b->parsed()) return bench_command(ba, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CapabilityError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cin, std::cout, std::cerr);
}

}  // namespace nmt::cli
