#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace frn {

/// Base for every error raised by the library. The CLI maps each subclass to
/// its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  IoError(const std::string& what, std::size_t offset = 0)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Cholesky hit a pivot <= 0. Usually means lambda is too small for the input.
class PivotError : public NumericalError {
 public:
  PivotError(std::ptrdiff_t pivot, double value)
      : NumericalError("non-positive pivot " + std::to_string(value) + " at index " +
                       std::to_string(pivot)),
        pivot_(pivot) {}
  std::ptrdiff_t pivot() const noexcept { return pivot_; }

 private:
  std::ptrdiff_t pivot_;
};

class GradientError : public NumericalError {
 public:
  GradientError(const std::string& parameter, const std::string& what)
      : NumericalError(parameter + ": " + what), parameter_(parameter) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

}  // namespace frn
