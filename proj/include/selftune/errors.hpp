#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "selftune/types.hpp"

namespace selftune {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape parameters outside the penalty's domain.
class DomainError : public Error {
 public:
  DomainError(const std::string& what, std::string parameter)
      : Error(what), parameter_(std::move(parameter)) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

/// n_c(theta) is infinite, either on the domain boundary or because the
/// penalty does not induce a proper density.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::string parameter)
      : Error(what), parameter_(std::move(parameter)) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

/// Adaptive quadrature exhausted its panel budget.
class ToleranceError : public Error {
 public:
  ToleranceError(const std::string& what, double estimate, double error)
      : Error(what), estimate_(estimate), error_(error) {}
  double estimate() const { return estimate_; }
  double error() const { return error_; }

 private:
  double estimate_;
  double error_;
};

/// Operation not available for this penalty (e.g. gradients of a kinked loss).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failure; carries the last iterate.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, Vector x, Vector theta)
      : Error(what), x_(std::move(x)), theta_(std::move(theta)) {}
  const Vector& x() const { return x_; }
  const Vector& theta() const { return theta_; }

 private:
  Vector x_;
  Vector theta_;
};

/// A block of the eliminated Newton system could not be factored.
class SingularBlockError : public Error {
 public:
  SingularBlockError(const std::string& what, std::string block, int condition)
      : Error(what), block_(std::move(block)), condition_(condition) {}
  /// "T3", "T4" or "T5".
  const std::string& block() const { return block_; }
  /// Which null-space condition of the implementability test it maps to (1-3).
  int condition() const { return condition_; }

 private:
  std::string block_;
  int condition_;
};

/// Malformed or unreadable input data.
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace selftune
