#pragma once

#include <stdexcept>
#include <string>

namespace gfast {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument. `field()` names the offending input.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed or truncated channel / artifact file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Numerical solver failure (non-convergence, infeasible demand, ...).
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace gfast
