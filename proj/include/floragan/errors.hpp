#pragma once

#include <stdexcept>
#include <string>

namespace floragan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not fit the operation (channel count, spatial size, divisibility).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value is outside the domain an operation accepts (NaN loss input, negative weight, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class FingerprintError : public Error {
 public:
  using Error::Error;
};

/// Request-level validation failure; `field` names the offending input.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace floragan
