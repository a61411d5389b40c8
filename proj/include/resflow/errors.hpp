#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace resflow {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent input (shapes, grids, parameter ranges).
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain where an operation is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Finite-volume step requested with a time step above the stability bound.
class CflError : public Error {
 public:
  CflError(const std::string& what, double admissible_dt)
      : Error(what), admissible_dt_(admissible_dt) {}

  double admissible_dt() const noexcept { return admissible_dt_; }

 private:
  double admissible_dt_;
};

/// The terminal Gramian of the bias-controlled linear system is singular.
class ControllabilityError : public Error {
 public:
  ControllabilityError(const std::string& what, double condition_estimate)
      : Error(what), condition_estimate_(condition_estimate) {}

  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

/// Kernel matrix could not be factorized even at the jitter ceiling.
class IllConditionedError : public Error {
 public:
  IllConditionedError(const std::string& what, double condition_estimate)
      : Error(what), condition_estimate_(condition_estimate) {}

  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  double condition_estimate_;
};

}  // namespace resflow
