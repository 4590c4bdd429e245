#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace simexplain {

/// Base of every error raised by the library. The CLI maps the two families
/// below onto its exit codes (validation -> 2, compute -> 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ComputeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InvalidData : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& field, const std::string& msg)
      : ValidationError("parse error in '" + field + "': " + msg), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class IntegrityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class Unsupported : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class TransportError : public ComputeError {
 public:
  using ComputeError::ComputeError;
};

class ConvergenceError : public ComputeError {
 public:
  ConvergenceError(const std::string& msg, std::size_t iterations)
      : ComputeError(msg + " (after " + std::to_string(iterations) + " sweeps)"),
        iterations_(iterations) {}
  std::size_t iterations() const { return iterations_; }

 private:
  std::size_t iterations_;
};

class OptimizationError : public ComputeError {
 public:
  using ComputeError::ComputeError;
};

}  // namespace simexplain
