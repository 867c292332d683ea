#pragma once

#include <stdexcept>
#include <string>

namespace relusparse {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  parse_error,
  precondition,
  infeasible,
  non_convergence,
  divergence,
  enumeration_limit,
  numerical,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::non_convergence: return "non_convergence";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::enumeration_limit: return "enumeration_limit";
    case ErrorCode::numerical: return "numerical";
  }
  return "unknown";
}

/// Library error carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace relusparse
