#pragma once

#include <stdexcept>
#include <string>

namespace hglmm {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that do not conform (wrong lengths, non-square matrices, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value outside its admissible domain: parameter bounds, response support,
/// malformed neighbor matrices.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Factorization failures that survive the jitter policy, singular systems,
/// loss of definiteness.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Iterative procedures that hit their iteration or evaluation cap.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace hglmm
