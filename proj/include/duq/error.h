// Copyright 2026 The DUQ Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DUQ_ERROR_H_
#define DUQ_ERROR_H_

#include <stdexcept>
#include <string>

namespace duq {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not satisfy an op's shape rule.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced, divergence, or an impossible numeric state.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file (IDX, checkpoint).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid user configuration or argument combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace duq

#endif  // DUQ_ERROR_H_
