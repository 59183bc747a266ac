#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace killchain {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that violates a documented contract (duplicate ids, bad shapes, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file that could not be parsed. Carries the 1-based line of the failure.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Failure to open, read or write a file.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace killchain
