#pragma once

#include <stdexcept>
#include <string>

namespace mmtrack {

/// Tensor shapes that do not fit the operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input text or binary data. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Detection with no supporting points reached an encoder that needs at least one.
class DegenerateDetectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No modality is available for a frame.
class SensorFailureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmtrack
