#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace piie {

// Violated precondition of an operation (caller bug).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Operand shapes do not fit together.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN or infinity where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data that breaks a domain rule (unknown tag, overlapping spans, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Malformed binary or text artifact (checkpoint, embedding file).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Checkpoint tensors do not match the architecture they are loaded into.
class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace piie
