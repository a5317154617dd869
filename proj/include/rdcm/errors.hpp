#pragma once

#include <stdexcept>
#include <string>

namespace rdcm {

// Shape or width disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid hyperparameter, variant, or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input values that violate a documented invariant (labels, simplex rows, norms).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent dataset files.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Misuse of the gradient tape.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite values during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rdcm
