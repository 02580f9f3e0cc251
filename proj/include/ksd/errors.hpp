// ksd/errors.hpp

// Copyright 2026  The ksd authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef KSD_ERRORS_HPP_
#define KSD_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace ksd {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

/// An argument violated a documented precondition (bad dimension, empty
/// batch, out-of-range class index, non-finite input, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Cholesky hit a non-positive pivot; the matrix was not positive definite.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// A forward/backward pass produced a non-finite value.
class NumericalOverflow : public Error {
 public:
  using Error::Error;
};

/// The gradient used to seed a Krylov basis was exactly zero.
class ZeroGradient : public Error {
 public:
  using Error::Error;
};

/// A curvature matrix was identically zero, so flooring has no scale to
/// work with.
class DegenerateCurvature : public Error {
 public:
  using Error::Error;
};

/// The objective was non-finite at the starting point of a minimization.
class InvalidStart : public Error {
 public:
  using Error::Error;
};

/// A data file did not match the expected binary format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An experiment config file failed to parse or validate.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A subset plan was infeasible for the dataset it was applied to.
class InvalidPlan : public Error {
 public:
  using Error::Error;
};

}  // namespace ksd

#endif  // KSD_ERRORS_HPP_
