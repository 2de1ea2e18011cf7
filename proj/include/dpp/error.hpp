#pragma once

#include <stdexcept>
#include <string>

namespace dpp {

/// Input violates a documented precondition or invariant (bad shape, label out of range, bad flag).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File opened fine but its contents are not in the expected format.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

/// Numerical failure during computation (zero-norm vector, all-zero score vector).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace dpp
