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

#include "nmt/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nmt/error.hpp"

namespace nmt {

namespace {

double evaluate(const ScalarFn& fn, std::span<Tensor* const> inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (Tensor* t : inputs) vars.push_back(tape.external(*t, false));
  return double(tape.value(fn(tape, vars))[0]);
}

}  // namespace

double grad_check(const ScalarFn& fn, std::span<Tensor* const> inputs,
                  const GradCheckOptions& options) {
  Tape tape;
  std::vector<Var> vars;
  for (Tensor* t : inputs) vars.push_back(tape.external(*t, true));
  const Var root = fn(tape, vars);
  tape.backward(root);

  std::mt19937_64 rng(options.seed);
  double worst = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& x = *inputs[i];
    const Tensor& g = tape.grad(vars[i]);
    std::vector<std::size_t> coords(x.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
    }
    for (std::size_t c : coords) {
      const double analytic = g.empty() ? 0.0 : double(g[c]);
      if (!std::isfinite(analytic))
        throw NumericError("grad_check: non-finite gradient at input " + std::to_string(i) +
                           ", coordinate " + std::to_string(c));
      const Real saved = x[c];
      x[c] = Real(double(saved) + options.epsilon);
      const double up = evaluate(fn, inputs);
      x[c] = Real(double(saved) - options.epsilon);
      const double down = evaluate(fn, inputs);
      x[c] = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
    }
  }
  return worst;
}

double grad_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& point, double epsilon) {
  Tensor x = point;
  Tensor* inputs[] = {&x};
  GradCheckOptions options;
  options.epsilon = epsilon;
  return grad_check([&](Tape& t, std::span<const Var> v) { return fn(t, v[0]); }, inputs, options);
}

}  // namespace nmt
