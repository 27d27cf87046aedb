#pragma once

#include <stdexcept>
#include <string>

namespace matenv {

/// Broad failure classes. The numeric values double as CLI exit codes.
enum class ErrorClass : int {
  usage = 2,
  data = 3,
  numerical = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string kind, const std::string& message)
      : std::runtime_error(message), cls_(cls), kind_(std::move(kind)) {}

  ErrorClass error_class() const noexcept { return cls_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorClass cls_;
  std::string kind_;
};

// Bad arguments handed to a library call (out-of-range dimension, negative lambda, ...).
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& msg)
      : Error(ErrorClass::usage, "InvalidArgument", msg) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(ErrorClass::usage, "UsageError", msg) {}
};

// Sample size too small for the requested model, or dimension mismatch between inputs.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg)
      : Error(ErrorClass::data, "DimensionError", msg) {}
};

class DataError : public Error {
 public:
  DataError(std::string kind, const std::string& msg) : Error(ErrorClass::data, std::move(kind), msg) {}
};

class MissingCellError : public DataError {
 public:
  explicit MissingCellError(const std::string& msg) : DataError("MissingCellError", msg) {}
};

class DuplicateCellError : public DataError {
 public:
  explicit DuplicateCellError(const std::string& msg) : DataError("DuplicateCellError", msg) {}
};

class RaggedDimensionError : public DataError {
 public:
  explicit RaggedDimensionError(const std::string& msg) : DataError("RaggedDimensionError", msg) {}
};

class ParseError : public DataError {
 public:
  explicit ParseError(const std::string& msg) : DataError("ParseError", msg) {}
};

class DefinitenessError : public Error {
 public:
  explicit DefinitenessError(const std::string& msg)
      : Error(ErrorClass::numerical, "DefinitenessError", msg) {}
};

// A conditional update needed to invert a singular matrix (M1, M2, design or residual covariance).
class SingularStepError : public Error {
 public:
  explicit SingularStepError(const std::string& msg)
      : Error(ErrorClass::numerical, "SingularStepError", msg) {}
};

class FitFailure : public Error {
 public:
  explicit FitFailure(const std::string& msg) : Error(ErrorClass::numerical, "FitFailure", msg) {}
};

}  // namespace matenv
