#pragma once

#include <stdexcept>
#include <string>

namespace anchorprop {

/// Failure categories. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  kValidation = 1,
  kIo = 2,
  kInvariant = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::kValidation, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what) : Error(ErrorKind::kInvariant, what) {}
};

}  // namespace anchorprop
