#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "probloc/geometry.hpp"
#include "probloc/scoring.hpp"

namespace probloc::cli {

inline constexpr int kMetricsSchemaVersion = 1;

/// One solved object. Estimate fields are meaningful only when status is "ok".
struct MetricsRow {
  int id = 0;
  std::string status = "ok";
  Dimensions dims;
  Pose gt;
  Pose est;
  double trans_err_m = 0.0;
  double yaw_err_rad = 0.0;
  double nll = 0.0;
  bool converged = false;
  bool hessian_conditioned = false;
  Matrix4d cov = Matrix4d::Zero();
  std::optional<Score> score;

  bool ok() const { return status == "ok"; }
};

/// Column names, in order. Scored tables append c_2d, c_3dloc, c_3d.
std::vector<std::string> metrics_header(bool with_score);

/// Header row then one CRLF record per row. Rows must all carry a score or
/// none.
void write_metrics(std::ostream& os, std::span<const MetricsRow> rows);

struct MetricsTable {
  std::vector<MetricsRow> rows;
  /// Per-row c_2d values when the input carries that column. Rows also get
  /// their score back when c_3dloc and c_3d are present.
  std::optional<std::vector<double>> c_2d;
};

/// Throws kSchemaMismatch on a foreign schema version and kMissingColumn when
/// a required column (including any covariance entry) is absent.
MetricsTable read_metrics(std::istream& is);

}  // namespace probloc::cli
