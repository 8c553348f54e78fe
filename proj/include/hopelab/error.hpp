#pragma once

#include <stdexcept>
#include <string>

namespace hope {

/// Precondition violated by a caller (bad length, odd head_dim, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A metric whose denominator vanished (VAF on an all-zero signal, ...).
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed or truncated file (checkpoint, CSV, task set).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or configuration shapes that do not line up.
class ShapeMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment configuration problem; `field()` names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hope
