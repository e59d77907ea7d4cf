#pragma once

#include <stdexcept>
#include <string>

namespace grimp {

// Base of every exception thrown by the library. The CLI maps the concrete
// subclass to a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an operation (log of a
// non-positive value, prior probability at 0 or 1, ...).
class NumericDomainError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition of the API.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent user data (CSV content, NaN in observed cells).
class DataError : public Error {
 public:
  using Error::Error;
};

// Corrupt or incompatible binary archive.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Configuration that cannot be run.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss).
class NumericFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace grimp
