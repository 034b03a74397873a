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
#include <functional>
#include <span>
#include <vector>

#include "nmt/tape.hpp"

namespace nmt {

/// Builds a scalar from leaves bound to the tensors under test.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
  double epsilon = 1e-4;
  /// Coordinates probed per tensor; 0 checks every coordinate. When
  /// sampling, coordinates are drawn with the given seed.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 13;
};

/// Compares the tape gradient of fn with central differences. Returns the
/// maximum over probed coordinates of
/// |analytic - numeric| / max(1, |analytic|), accumulated in double.
/// The tensors are perturbed in place and restored before returning.
/// Throws NumericError on a non-finite gradient.
double grad_check(const ScalarFn& fn, std::span<Tensor* const> inputs,
                  const GradCheckOptions& options = {});

/// Single-input convenience form.
double grad_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& point,
                  double epsilon = 1e-4);

}  // namespace nmt
