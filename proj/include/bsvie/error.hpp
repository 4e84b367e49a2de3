#pragma once

#include <stdexcept>
#include <string>

namespace bsvie {

enum class ErrorKind {
  invalid_parameter,
  numeric_error,
  contraction_violated,
  singular_system,
  measure_degenerate,
  divergent,
  regression_singular,
  no_convergence,
  instability_detected,
  assumption_violated,
  config_error,
  verifier_failed,
};

const char* to_string(ErrorKind kind) noexcept;

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::invalid_parameter, message);
}

}  // namespace bsvie
