#pragma once

#include <stdexcept>
#include <string>

namespace papp {

/// Invalid shapes, parameters or configuration keys.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Missing, unreadable, unwritable or corrupt files.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Factorization failures, bracketing failures, NaN losses.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Zero-power input where a strict normalization was requested.
class DegenerateInputError : public NumericError {
 public:
  explicit DegenerateInputError(const std::string& what) : NumericError(what) {}
};

}  // namespace papp
