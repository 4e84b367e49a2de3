#include "bsvie/error.hpp"

namespace bsvie {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_parameter: return "invalid-parameter";
    case ErrorKind::numeric_error: return "numeric-error";
    case ErrorKind::contraction_violated: return "contraction-violated";
    case ErrorKind::singular_system: return "singular-system";
    case ErrorKind::measure_degenerate: return "measure-degenerate";
    case ErrorKind::divergent: return "divergent";
    case ErrorKind::regression_singular: return "regression-singular";
    case ErrorKind::no_convergence: return "no-convergence";
    case ErrorKind::instability_detected: return "instability-detected";
    case ErrorKind::assumption_violated: return "assumption-violated";
    case ErrorKind::config_error: return "config-error";
    case ErrorKind::verifier_failed: return "verifier-failed";
  }
  return "unknown";
}

}  // namespace bsvie
