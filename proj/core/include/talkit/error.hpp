// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace talkit {

// Base for every error the toolkit raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Domain values or file contents violate a stated invariant. CLI exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// On-disk bytes cannot be parsed as the claimed format.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A run-configuration field is missing, malformed, or out of range.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Training aborted (NaN loss, empty batch, ...). CLI exit code 2.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace talkit
