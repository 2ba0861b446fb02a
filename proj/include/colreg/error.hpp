#pragma once

#include <stdexcept>
#include <string>

namespace colreg {

enum class ErrorCode {
  malformed_input,
  cycle,
  duplicate_edge,
  unknown_vertex,
  overlapping_sets,
  partition_invalid,
  empty_boundary,
  not_symmetric,
  not_factorizable,
  dimension_mismatch,
  invalid_argument,
  kernel_mismatch,
  missing_latents,
  all_candidates_failed,
  too_few_differences,
  config,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::malformed_input: return "malformed-input";
    case ErrorCode::cycle: return "cycle";
    case ErrorCode::duplicate_edge: return "duplicate-edge";
    case ErrorCode::unknown_vertex: return "unknown-vertex";
    case ErrorCode::overlapping_sets: return "overlapping-sets";
    case ErrorCode::partition_invalid: return "partition-invalid";
    case ErrorCode::empty_boundary: return "empty-boundary";
    case ErrorCode::not_symmetric: return "not-symmetric";
    case ErrorCode::not_factorizable: return "not-factorizable";
    case ErrorCode::dimension_mismatch: return "dimension-mismatch";
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::kernel_mismatch: return "kernel-mismatch";
    case ErrorCode::missing_latents: return "missing-latents";
    case ErrorCode::all_candidates_failed: return "all-candidates-failed";
    case ErrorCode::too_few_differences: return "too-few-differences";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Numerical failures (factorization, conditioning) get their own type so
/// callers can separate them from usage errors.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace colreg
