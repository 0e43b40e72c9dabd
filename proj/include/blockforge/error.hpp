#pragma once

#include <stdexcept>
#include <string>

namespace blockforge {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionTooSmall,
  kDimensionMismatch,
  kDegeneratePolygon,
  kPaletteMismatch,
  kDecodeFailed,
  kEmptyEvaluation,
  kNoQualifyingRegions,
  kNoFeasibleGrid,
  kNotFound,
  kStateViolation,
  kSchemaViolation,
  kIoError,
  kSupportViolation,
  kInvalidDistribution,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace blockforge
