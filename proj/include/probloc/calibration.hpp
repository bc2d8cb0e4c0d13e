#pragma once

#include <Eigen/Core>
#include <iosfwd>
#include <span>
#include <vector>

#include "probloc/geometry.hpp"

namespace probloc {

/// Per-axis log-scale correction of a pose covariance.
struct CalibrationVector {
  Vector4d k = Vector4d::Zero();

  /// exp(k), the per-axis standard-deviation multiplier.
  Vector4d scale() const { return k.array().exp().matrix(); }
};

/// exp(diag k) * raw_cov * exp(diag k).
Matrix4d calibrated_cov(const Matrix4d& raw_cov, const CalibrationVector& k);

struct CalibrationPair {
  Pose p_star;
  Pose p_gt;
  Matrix4d raw_cov = Matrix4d::Identity();
};

struct FitConfig {
  int steps = 500;
  double learning_rate = 1e-2;
  std::size_t min_pairs = 10;
  /// Scale each step by the inverse mean Fisher information of k,
  /// I + mean(C^-1 o C), which does not depend on k.
  bool preconditioned = true;
};

struct CalibrationFit {
  CalibrationVector k;
  /// Mean calibration loss before each step, then after the last one.
  std::vector<double> loss_trace;
};

/// Full-batch gradient descent on the mean calibration loss over k only.
/// Throws kInsufficientPairs below cfg.min_pairs and kDegenerateData when a
/// raw covariance is not positive definite.
CalibrationFit fit_calibration(std::span<const CalibrationPair> pairs,
                               const CalibrationVector& init = {},
                               const FitConfig& cfg = {});

/// Mean Mahalanobis-squared pose error under the calibrated covariances.
double mean_mahalanobis(std::span<const CalibrationPair> pairs,
                        const CalibrationVector& k);

struct ReliabilityRecord {
  Eigen::Vector3d t_star = Eigen::Vector3d::Zero();
  Eigen::Vector3d t_gt = Eigen::Vector3d::Zero();
  /// Predicted translation covariance.
  Eigen::Matrix3d cov_t = Eigen::Matrix3d::Identity();
};

struct ReliabilityBin {
  double z_lo = 0.0;
  double z_hi = 0.0;
  std::size_t n = 0;
  /// Entropy of the mean predicted covariance (nats).
  double h_pred = 0.0;
  /// Entropy of the sample covariance of actual errors (nats).
  double h_actual = 0.0;
  /// Fewer than the minimum count of records fell in this bin.
  bool sparse = false;
};

struct ReliabilityReport {
  std::vector<ReliabilityBin> bins;

  /// Columns z_lo, z_hi, n, H_pred, H_actual; CRLF line endings.
  void write_csv(std::ostream& os) const;
};

inline constexpr std::size_t kReliabilityMinCount = 30;

/// 10 m bins over [0, 70] m.
std::vector<double> default_bin_edges();

/// 0.5 log det(2 pi e cov).
double gaussian_entropy(const Eigen::Matrix3d& cov);

/// Bins records by ground-truth depth and compares predicted against actual
/// error entropy. cov_scale multiplies every predicted covariance.
ReliabilityReport reliability(std::span<const ReliabilityRecord> records,
                              std::span<const double> bin_edges,
                              std::size_t n_min = kReliabilityMinCount,
                              double cov_scale = 1.0);

}  // namespace probloc
