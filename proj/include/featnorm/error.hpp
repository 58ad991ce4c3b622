#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace featnorm {

/// Broad failure categories. The CLI maps each one to its own exit code.
enum class ErrorKind {
  kPrecondition,  // caller passed arguments outside an operation's domain
  kParse,         // malformed input text
  kNumeric,       // non-finite values, non-convergence, degenerate statistics
  kNetwork,       // transport failures and HTTP errors
  kConfig,        // missing or inconsistent configuration
  kIo,            // filesystem failures
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what) : Error(ErrorKind::kPrecondition, what) {}
};

/// Parse failure; `line()` is 1-based when the failure is tied to a line of input.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::optional<std::size_t> line = std::nullopt)
      : Error(ErrorKind::kParse, line ? "line " + std::to_string(*line) + ": " + what : what),
        line_(line) {}

  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  std::optional<std::size_t> line_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

class NetworkError : public Error {
 public:
  explicit NetworkError(const std::string& what) : Error(ErrorKind::kNetwork, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

}  // namespace featnorm
