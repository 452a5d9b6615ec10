#pragma once

#include <stdexcept>
#include <string>

namespace bnmf {

// Error taxonomy, mirrored by the CLI exit codes:
//   ValidationError -> 2, IoError -> 3, NumericalError / DomainError -> 4.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid argument to a mathematical operation (nonpositive precision,
// non-finite input, empty mask, ...).
struct DomainError : Error {
  using Error::Error;
};

// A config or run specification violates an invariant.
struct ValidationError : Error {
  using Error::Error;
};

// File system and parsing failures.
struct IoError : Error {
  using Error::Error;
};

struct ParseError : IoError {
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : IoError(path + ":" + std::to_string(line) + ": " + what),
        line_number(line) {}
  std::size_t line_number;
};

// A sampler conditional produced a non-finite parameter; the message
// identifies the variable, its indices, and the offending parameters.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace bnmf
