#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wee {

/// Base class for every error raised by the engine and its front end.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Source text could not be parsed. Carries a 1-based line/column.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : Error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        message_(message),
        line_(line),
        column_(column) {}

  const std::string& message() const noexcept { return message_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string message_;
  std::size_t line_;
  std::size_t column_;
};

/// Expression evaluation failed (unbound variable, type mismatch, division by zero).
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Failure while executing a workflow instance.
class RuntimeError : public Error {
 public:
  using Error::Error;
};

}  // namespace wee
