#pragma once

#include <stdexcept>
#include <string>

namespace dbvar {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed specs, dimension mismatches, violated preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A well-formed request that failed numerically.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class LayoutMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InfeasibleDesign : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NonIdentifiedDesign : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SupportOverflow : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class PreconditionViolation : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NotIdentified : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EstimationInfeasible : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class BudgetExceeded : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonConvergence : public NumericalError {
 public:
  NonConvergence(const std::string& what, int iterations, double last_min_eig)
      : NumericalError(what), iterations_(iterations), last_min_eig_(last_min_eig) {}
  int iterations() const { return iterations_; }
  double last_min_eig() const { return last_min_eig_; }

 private:
  int iterations_;
  double last_min_eig_;
};

}  // namespace dbvar
