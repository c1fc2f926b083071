#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace synthabsa {

/// Configuration or record content violates the aspect/nuance schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (bad K, unknown band, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An internal contract between pipeline stages was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input document; carries the 1-based line when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Provider transport failure. Retryable by the batch dispatcher.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace synthabsa
