// Copyright 2026 The pseudolang Authors.
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

namespace pseudolang {

// Base of every error raised by the library. Validation-type errors map to
// CLI exit status 1, numeric failures to exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file header or text record.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Header and payload disagree, or payload holds non-finite values.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

// Invalid argument or precondition violation.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Clustering input with fewer distinct points than requested centers.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage is missing an upstream artifact, or an artifact no longer
// matches the checksum recorded when it was produced.
class StageError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in a forward pass or a diverged training run.
class NumericError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public NumericError {
 public:
  TrainingDivergedError(const std::string& what, long step)
      : NumericError(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace pseudolang
