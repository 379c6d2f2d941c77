#pragma once

#include <stdexcept>
#include <string>

namespace metalqr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad shapes: non-square input, mismatched task/gain dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid values: non-PD R, malformed config fields, bad weights.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A closed loop with spectral radius >= 1 where stability is required.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

// Iterative solver exhausted its budget; carries the last residual.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// A simulated trajectory overflowed; carries the offending step.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step)
      : Error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

// The outer optimization produced a policy outside the stabilizing set.
class StabilityViolationError : public Error {
 public:
  StabilityViolationError(const std::string& what, long iteration)
      : Error(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

// Task generation could not produce a feasible collection.
class GenerationError : public Error {
 public:
  using Error::Error;
};

// Malformed config / task / trace file.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace metalqr
