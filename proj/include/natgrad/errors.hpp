#pragma once

#include <stdexcept>
#include <string>

namespace natgrad {

/// Caller broke a documented precondition (shape mismatch, non-finite input, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine produced non-finite values or a singular system.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, long iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

/// Malformed experiment configuration or unusable output location.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace natgrad
