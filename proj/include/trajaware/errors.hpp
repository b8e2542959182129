#pragma once

#include <stdexcept>
#include <string>

namespace trajaware {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument values (dimensions, rates, counts).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-specific.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a semantic constraint.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A vehicle or node id that is not present.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// A vehicle that has drifted off its own planned path.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by a numeric operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

/// A routing decision was requested with no valid action.
class NoActionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training diverged; carries the last checkpoint that was still stable.
class TrainingFailure : public Error {
 public:
  TrainingFailure(const std::string& what, std::string stable_checkpoint)
      : Error(what), stable_checkpoint_(std::move(stable_checkpoint)) {}
  const std::string& stable_checkpoint() const { return stable_checkpoint_; }

 private:
  std::string stable_checkpoint_;
};

}  // namespace trajaware
