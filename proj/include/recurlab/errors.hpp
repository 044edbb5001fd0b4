#pragma once

#include <stdexcept>
#include <string>

namespace recurlab {

/// Base of every error raised by the library. The CLI maps subclasses onto
/// exit codes (config problems -> 2, numerical problems -> 5).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what, double residual = 0.0)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class UnsupportedExactPath : public Error {
 public:
  using Error::Error;
};

class UnsupportedDimension : public Error {
 public:
  using Error::Error;
};

class RefinementLimit : public Error {
 public:
  using Error::Error;
};

class PrecisionExhausted : public Error {
 public:
  PrecisionExhausted(const std::string& what, long max_admissible_steps)
      : Error(what), max_steps_(max_admissible_steps) {}
  /// Largest orbit length the offending precision could have supported.
  long max_admissible_steps() const noexcept { return max_steps_; }

 private:
  long max_steps_;
};

}  // namespace recurlab
