#pragma once

#include <stdexcept>
#include <string>

namespace vtf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cholesky failed, or its smallest pivot fell below the near-singular guard.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class NotSymmetric : public Error {
 public:
  using Error::Error;
};

/// The symmetric eigensolver did not converge within its iteration budget.
class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Two tangent vectors in different representations were combined.
class ModeMismatch : public Error {
 public:
  using Error::Error;
};

/// Two tangent vectors based at different points were combined without transport.
class BaseMismatch : public Error {
 public:
  using Error::Error;
};

/// A stored memory pair violates g(s,y) > guard * g(s,s).
class CurvatureBreakdown : public Error {
 public:
  using Error::Error;
};

class InfeasibleStart : public Error {
 public:
  using Error::Error;
};

/// Mean rejection sampling ran out of trials; enlarge the sampling box.
class SeparationUnsatisfiable : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace vtf
