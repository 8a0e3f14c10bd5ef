#pragma once

#include <stdexcept>
#include <string>

namespace spm {

/// Malformed arguments: unknown agent/item ids, dimension mismatches.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An action that violates the round protocol (visited agent, sold item).
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A computation that would exceed its configured search/enumeration budget.
class SizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation is not defined for this input (e.g. exact oracle on a continuous setting).
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration or setting that cannot be used (vmax = 0, empty arm list, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure during training (NaN loss).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spm
