// Copyright 2026 The mopseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mop {

/// Base for every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Extents that do not line up (shape mismatch, divisibility failure).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value was produced; the tensor layer treats NaN/Inf as fatal.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the gradient tape (non-scalar loss, reused or foreign graph).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration key, value type or range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mop
