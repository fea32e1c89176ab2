// Copyright 2026 The MILab Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace milab {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (bad JSONL line, bad model file body, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

/// Not enough users/samples to satisfy a requested split or training run.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Training data that cannot support the requested fit (single class, empty
/// token stream, ...).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or wrong-version serialized artifact.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// A signature or pair list with no usable features.
class EmptySignalError : public Error {
 public:
  using Error::Error;
};

/// An attack preparation that selected nothing.
class NoSignalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

// Always-on invariant check; these guard algorithm postconditions that must
// hold in release experiment runs, not just debug builds.
inline void check(bool cond, const std::string& msg) {
  if (!cond) throw NumericError("internal invariant violated: " + msg);
}

}  // namespace detail

}  // namespace milab
