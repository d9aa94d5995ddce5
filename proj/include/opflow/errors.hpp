#pragma once

#include <stdexcept>
#include <string>

namespace opflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (non power-of-two grid, unknown PDE, bad preset, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A forward op produced NaN or Inf.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an API contract (e.g. backward from a non-scalar node).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// PDE integration blew up; carries the time that was reached.
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& what, double time_reached)
      : Error(what), time_reached_(time_reached) {}
  double time_reached() const noexcept { return time_reached_; }

 private:
  double time_reached_;
};

/// Kernel has a significantly negative Fourier coefficient.
class KernelError : public Error {
 public:
  using Error::Error;
};

/// Err(a, b) with an all-zero reference.
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Evaluation asked for a time that the trajectory does not contain.
class CoverageError : public Error {
 public:
  using Error::Error;
};

// Container format errors. Each failure mode is its own type.
class FormatError : public Error {
 public:
  using Error::Error;
};
class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace opflow
