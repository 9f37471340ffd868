#pragma once

#include <stdexcept>
#include <string>

namespace kdsm {

/// Bad caller input: empty columns, NaN data, malformed files, shape mismatches.
struct InvalidInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// An iteration failed to converge or produced a non-finite value.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operation requires state the object does not have (e.g. no EMA copy).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

/// A statistic was requested on a (near-)constant column.
struct DegenerateFeatureError : DomainError {
  using DomainError::DomainError;
};

}  // namespace kdsm
