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

#include <stdexcept>
#include <string>

namespace nmt {

/// Base class of every error raised by the library. The CLI maps the
/// subclasses onto its exit-code contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid model, search or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed user input (sentences, JSON records, prefixes, corpora).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Parallel data files that are not line aligned, corrupt shards and
/// similar on-disk data problems.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or mismatching checkpoints.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Decoder state that does not belong to the model/encoding it is used with.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Feature requested from a model that was not built with it (e.g. NVS).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace nmt
