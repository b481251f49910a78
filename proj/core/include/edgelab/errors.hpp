#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace edgelab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented invariant of an input or result does not hold.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Shapes or dimensions of the inputs are inconsistent.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A function returned a non-finite value at an evaluation point.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Root bracket without a sign change.
class BracketError : public Error {
 public:
  using Error::Error;
};

/// Jacobian or Hessian is singular (or too ill-conditioned) on the working space.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// An iteration exhausted its budget. Carries the residual history.
class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}

  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// Step d_k is numerically zero, so per-step curvatures are undefined.
class DegenerateStepError : public Error {
 public:
  using Error::Error;
};

/// Localization grid refinement exhausted without finding a root.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// Quartic coefficient vanishes; the leading-order branch is undetermined.
class DegenerateBranchError : public Error {
 public:
  using Error::Error;
};

/// Index outside the range covered by a log.
class IndexError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgelab
