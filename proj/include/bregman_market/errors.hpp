#pragma once

#include <stdexcept>
#include <string>

namespace bregman_market {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatches, invalid indices, bad parameters.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Well-formed arguments outside the mathematical domain of an operation
/// (a belief outside the payoff polytope, a price outside ri dom C*, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An iterative method failed to reach its tolerance.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

  double residual() const { return residual_; }

 private:
  double residual_;
};

/// The request is valid but outside what the chosen method can certify.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A test oracle could not produce an answer (e.g. empty search grid).
class OracleError : public Error {
 public:
  using Error::Error;
};

}  // namespace bregman_market
