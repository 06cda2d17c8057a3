#pragma once

#include <stdexcept>
#include <string>

namespace anchor {

// Caller broke a documented precondition (length mismatch, NaN, out-of-range id).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Aggregation was asked for an empty confidence window.
class EmptyWindowError : public std::domain_error {
 public:
  EmptyWindowError() : std::domain_error("confidence window is empty") {}
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TemplateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transport, protocol or tokenizer failure inside a model backend.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TokenizationError : public BackendError {
 public:
  using BackendError::BackendError;
};

// Dataset / results file that does not match its schema.
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace anchor
