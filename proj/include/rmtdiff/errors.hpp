#pragma once

#include <stdexcept>
#include <string>

namespace rmtdiff {

// Validation failures (bad arguments, malformed files). The CLI maps these to exit code 2.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public InvalidArgument {
 public:
  ParseError(const std::string& what, std::size_t line)
      : InvalidArgument(what + ", line " + std::to_string(line)), line_(line) {}
  explicit ParseError(const std::string& what) : InvalidArgument(what), line_(0) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Numerical failures. The CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double last_iterate, double residual)
      : NumericalError(what), last_iterate_(last_iterate), residual_(residual) {}

  double last_iterate() const noexcept { return last_iterate_; }
  double residual() const noexcept { return residual_; }

 private:
  double last_iterate_;
  double residual_;
};

class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Raised when n <= df2 so that the asymptotic variance formulas have a non-positive denominator.
class OutOfRegimeError : public NumericalError {
 public:
  OutOfRegimeError(const std::string& what, double margin) : NumericalError(what), margin_(margin) {}

  double margin() const noexcept { return margin_; }

 private:
  double margin_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace rmtdiff
