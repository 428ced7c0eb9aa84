#pragma once

#include <stdexcept>
#include <string>

namespace twoway {

// Failure classes. The CLI maps these onto exit codes, so keep them distinct.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A scalar argument is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A caller broke an API contract (stale trace, misaligned registries, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, failed convergence, rank deficiency.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Loss blew up during training; the message names the offending term.
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Malformed or truncated input file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid model or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace twoway
