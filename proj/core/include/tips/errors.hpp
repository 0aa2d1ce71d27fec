#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tips {

// Base of every error raised by the library. User-facing errors (bad config,
// bad input files) derive from UserError so the CLI can map them to exit 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UserError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class DataError : public UserError {
 public:
  using UserError::UserError;
};

class FormatError : public UserError {
 public:
  FormatError(const std::string& what, std::size_t line)
      : UserError(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit FormatError(const std::string& what) : UserError(what), line_(0) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public UserError {
 public:
  using UserError::UserError;
};

}  // namespace tips
