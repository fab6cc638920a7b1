// Copyright 2026 The crnn Authors. All Rights Reserved.
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

#ifndef CRNN_ERROR_HPP_
#define CRNN_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace crnn {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible, or an operation would produce an empty
// extent.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// API misuse: wrong arity, empty inputs where one is required, budgets.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in a state that does not support it (e.g. batch-norm
// inference before any statistics were gathered).
class StateError : public Error {
 public:
  using Error::Error;
};

// Symbol outside the configured alphabet.
class AlphabetError : public Error {
 public:
  using Error::Error;
};

// Model or run configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// CTC target cannot be aligned to the available frames.
class InfeasibleTargetError : public Error {
 public:
  using Error::Error;
};

// Dataset, image, or lexicon I/O failure.
class StorageError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointDigestError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace crnn

#endif  // CRNN_ERROR_HPP_
