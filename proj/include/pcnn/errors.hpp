#pragma once

#include <stdexcept>
#include <string>

namespace pcnn {

// Bad input values or shapes. The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DegenerateGeometryError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class LookupError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class CapacityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Unreadable/unwritable files and malformed containers. Exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace pcnn
