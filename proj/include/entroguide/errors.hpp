#pragma once

// SPDX-License-Identifier: Apache-2.0

#include <stdexcept>
#include <string>

namespace entroguide {

/// Bad flags, config values or backend capabilities. CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model backend failure. CLI exit code 2.
class BackendError : public std::runtime_error {
 public:
  BackendError(const std::string& what, bool retryable)
      : std::runtime_error(what), retryable_(retryable) {}

  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

/// Unreadable or empty dataset. CLI exit code 3.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace entroguide
