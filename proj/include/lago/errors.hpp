#ifndef LAGO_ERRORS_HPP
#define LAGO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace lago {

// Bad input: malformed config, out-of-order stages, violated preconditions.
// The CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation that could not be completed on valid input.
// The CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SeparationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class RankDeficientError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class NonFiniteError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class DegenerateVarianceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SingularCovarianceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// No package within bounds reaches the requested threshold.
class InfeasibleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// The power constraint fails even at the extreme achievable outcome.
class NoThresholdError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class OutOfOrderStageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace lago

#endif
