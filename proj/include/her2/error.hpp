#pragma once

#include <stdexcept>
#include <string>

namespace her2 {

/// Process exit codes shared by the CLI.
enum class ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kDataError = 3,
  kInvariantFailure = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept = 0;
};

/// Malformed or unreadable input: bad files, schema violations, bad arguments.
class InputError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kInputError; }
};

/// Well-formed input that cannot be processed: missing class coverage,
/// degenerate slides, empty training sets.
class DataError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kDataError; }
};

/// An internal invariant was violated.
class InvariantError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kInvariantFailure; }
};

}  // namespace her2
