// include/spkrefine/base.h
//
// Copyright 2026  spkrefine authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPKREFINE_BASE_H_
#define SPKREFINE_BASE_H_

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

// The library is compiled twice: the default float32 build used for training
// and inference, and a float64 build (SPKREFINE_DOUBLE) used for gradient
// checks. Each build lives in its own inline namespace so both can be linked
// into one binary.
#ifdef SPKREFINE_DOUBLE
#define SPKREFINE_PRECISION_NS f64
#else
#define SPKREFINE_PRECISION_NS f32
#endif

#define SPKREFINE_NAMESPACE_BEGIN \
  namespace spkrefine {           \
  inline namespace SPKREFINE_PRECISION_NS {
#define SPKREFINE_NAMESPACE_END \
  }                             \
  }

SPKREFINE_NAMESPACE_BEGIN

#ifdef SPKREFINE_DOUBLE
using Real = double;
#else
using Real = float;
#endif

// Feature and activation matrices are channels x frames.
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

constexpr int kSampleRate = 16000;

// Error hierarchy. The CLI maps each class to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing or unreadable files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Foreign or malformed file contents. The subclasses below are the distinct
// failure classes of the binary formats.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ConfigMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Non-finite values, divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Input too short for the requested framing or chunking.
class TooShortError : public Error {
 public:
  using Error::Error;
};

// Shape disagreement between in-memory operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_BASE_H_
