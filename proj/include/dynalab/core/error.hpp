// Copyright 2026 The dynalab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dynalab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: bad config keys, inadmissible metric requests,
/// malformed CLI arguments. The CLI maps these to exit status 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Digest mismatch, bad magic, truncated payloads.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Metric evaluation failure on a well-formed request (zero matrix,
/// degenerate input). Carries a short machine-readable reason code.
class MetricError : public Error {
 public:
  MetricError(std::string code, const std::string& what)
      : Error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace dynalab
