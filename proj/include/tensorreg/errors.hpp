#pragma once

#include <stdexcept>
#include <string>

namespace tensorreg {

/// Shape/rank/index mismatches between structurally related objects.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameter outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Numerical failure (non-SPD precision, underflow of all weights, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Canonical form does not exist for the given factors.
class CanonicalizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed external input (files, configs); carries a byte offset when known.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what, long byte_offset = -1)
      : std::runtime_error(byte_offset >= 0
                               ? what + " (byte offset " + std::to_string(byte_offset) + ")"
                               : what),
        byte_offset_(byte_offset) {}
  long byte_offset() const { return byte_offset_; }

 private:
  long byte_offset_;
};

/// Invalid run configuration; maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tensorreg
