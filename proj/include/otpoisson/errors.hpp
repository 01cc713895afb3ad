#pragma once

#include <stdexcept>
#include <string>

namespace otp {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class EmptySet : public Error {
 public:
  using Error::Error;
};

// A point lies outside the closed computational domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Operands live on different grids or have incompatible sizes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Marginals with different total mass.
class Infeasible : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

// A check was requested for a cost model it does not apply to.
class WrongModel : public Error {
 public:
  using Error::Error;
};

class SeparationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace otp
