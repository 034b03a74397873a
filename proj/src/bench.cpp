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

#include "nmt/bench.hpp"

#include <chrono>
#include <random>

#include "nmt/error.hpp"
#include "nmt/search.hpp"
#include "nmt/vocab.hpp"

namespace nmt {

std::vector<std::vector<int>> synthetic_sources(std::size_t vocab_size, std::size_t count, std::size_t length,
                                                std::uint64_t seed) {
  if (vocab_size <= 4) throw ConfigError("synthetic sources need regular vocabulary entries");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int>> out(count, std::vector<int>(length));
  for (auto& s : out)
    for (int& id : s) id = int(4 + rng() % (vocab_size - 4));
  return out;
}

BenchReport benchmark(std::shared_ptr<const InferenceModel> model, std::span<const std::vector<int>> sources,
                      const BenchOptions& options) {
  const std::size_t nf = model->config().source_factor_specs.size();
  BenchReport report;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < options.repeats; ++r)
    for (const auto& src : sources) {
      const std::vector<std::vector<int>> factors(nf, std::vector<int>(src.size(), kPadId));
      auto encoded = std::make_shared<const EncoderOutput>(model->prepare(src, factors));
      const SearchProblem problem = make_search_problem(model, encoded, {});
      const Hypothesis h = options.greedy ? greedy_search(problem) : beam_search(problem, {options.beam, 1.0});
      ++report.sentences;
      report.output_tokens += h.tokens.size() + 1;
    }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace nmt
