#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace probloc {

enum class ErrorCode {
  kInvalidArgument,
  kPointBehindCamera,
  kEmptyBatch,
  kEmptyMask,
  kSingularCovariance,
  kTooFewPoints,
  kAllStartsDiverged,
  kNotConverged,
  kTooFewSamples,
  kDegenerateData,
  kInsufficientPairs,
  kFrustumExhausted,
  kSchemaMismatch,
  kMissingColumn,
  kIo,
};

// Stable snake_case identifier, used in CSV status columns.
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace probloc
