#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cce {

// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kNumerical = 3,
};

/// Bad invocation: unknown flag, missing required option, invalid config value.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parse failure anchored at a 1-based line of the offending input.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid UTF-8 at a given byte offset.
class DecodeError : public DataError {
 public:
  DecodeError(std::size_t byte_offset, const std::string& what)
      : DataError("invalid UTF-8 at byte offset " + std::to_string(byte_offset) + ": " + what),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// NaN, infinity, or divergence during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cce
