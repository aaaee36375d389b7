#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace isogat {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A learnable normalizer (layer weights, fusion weights) collapsed to zero.
class DegenerateWeightsError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Dataset content is unusable (empty manifest, unresolved id, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid option combination supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Binary or text file does not follow its documented layout.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace isogat
