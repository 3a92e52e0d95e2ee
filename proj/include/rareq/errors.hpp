#pragma once

#include <stdexcept>
#include <string>

namespace rareq {

/// Raised when a caller violates an operation's precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical fit (GP hyperparameters, GPD likelihood) could not be completed.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Not enough samples to place the tail threshold; callers fall back to prior-only inference.
class InsufficientSamples : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ArgumentError(message);
}

}  // namespace detail
}  // namespace rareq
