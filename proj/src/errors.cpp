#include "probloc/errors.hpp"

namespace probloc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kPointBehindCamera: return "point_behind_camera";
    case ErrorCode::kEmptyBatch: return "empty_batch";
    case ErrorCode::kEmptyMask: return "empty_mask";
    case ErrorCode::kSingularCovariance: return "singular_covariance";
    case ErrorCode::kTooFewPoints: return "too_few_points";
    case ErrorCode::kAllStartsDiverged: return "all_starts_diverged";
    case ErrorCode::kNotConverged: return "not_converged";
    case ErrorCode::kTooFewSamples: return "too_few_samples";
    case ErrorCode::kDegenerateData: return "degenerate_data";
    case ErrorCode::kInsufficientPairs: return "insufficient_pairs";
    case ErrorCode::kFrustumExhausted: return "frustum_exhausted";
    case ErrorCode::kSchemaMismatch: return "schema_mismatch";
    case ErrorCode::kMissingColumn: return "missing_column";
    case ErrorCode::kIo: return "io_error";
  }
  return "unknown";
}

}  // namespace probloc
