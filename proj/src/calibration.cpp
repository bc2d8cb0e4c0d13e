#include "probloc/calibration.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "probloc/errors.hpp"
#include "probloc/format.hpp"
#include "probloc/losses.hpp"

namespace probloc {

Matrix4d calibrated_cov(const Matrix4d& raw_cov, const CalibrationVector& k) {
  const Vector4d d = k.scale();
  return d.asDiagonal() * raw_cov * d.asDiagonal();
}

CalibrationFit fit_calibration(std::span<const CalibrationPair> pairs,
                               const CalibrationVector& init,
                               const FitConfig& cfg) {
  if (pairs.size() < cfg.min_pairs) {
    throw Error(ErrorCode::kInsufficientPairs,
                "calibration needs at least " + std::to_string(cfg.min_pairs) +
                    " pairs, got " + std::to_string(pairs.size()));
  }
  for (const CalibrationPair& p : pairs) {
    if (Eigen::LLT<Matrix4d>(p.raw_cov).info() != Eigen::Success) {
      throw Error(ErrorCode::kDegenerateData,
                  "raw pose covariance is not positive definite");
    }
  }

  std::vector<Vector4d> errors;
  errors.reserve(pairs.size());
  for (const CalibrationPair& p : pairs) errors.push_back(pose_delta(p.p_star, p.p_gt));

  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  Matrix4d fisher = Matrix4d::Identity();
  if (cfg.preconditioned) {
    Matrix4d hadamard = Matrix4d::Zero();
    for (const CalibrationPair& p : pairs) {
      hadamard += p.raw_cov.inverse().cwiseProduct(p.raw_cov);
    }
    fisher += inv_n * hadamard;
  }
  const Eigen::LLT<Matrix4d> fisher_llt(fisher);
  if (fisher_llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kDegenerateData, "calibration Fisher information is singular");
  }
  auto evaluate = [&](const Vector4d& k, Vector4d& grad) {
    double loss = 0.0;
    grad.setZero();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const CalibLossEval e = calib_loss(errors[i], pairs[i].raw_cov, k);
      loss += e.value;
      grad += e.d_k;
    }
    grad *= inv_n;
    return loss * inv_n;
  };

  CalibrationFit fit;
  fit.k = init;
  fit.loss_trace.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  Vector4d grad;
  for (int step = 0; step < cfg.steps; ++step) {
    fit.loss_trace.push_back(evaluate(fit.k.k, grad));
    fit.k.k -= cfg.learning_rate * fisher_llt.solve(grad);
  }
  fit.loss_trace.push_back(evaluate(fit.k.k, grad));
  return fit;
}

double mean_mahalanobis(std::span<const CalibrationPair> pairs,
                        const CalibrationVector& k) {
  if (pairs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const CalibrationPair& p : pairs) {
    const Vector4d dp = pose_delta(p.p_star, p.p_gt);
    sum += dp.dot(calibrated_cov(p.raw_cov, k).ldlt().solve(dp));
  }
  return sum / static_cast<double>(pairs.size());
}

std::vector<double> default_bin_edges() {
  return {0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0};
}

double gaussian_entropy(const Eigen::Matrix3d& cov) {
  constexpr double kTwoPiE = 2.0 * std::numbers::pi * std::numbers::e;
  return 0.5 * std::log((kTwoPiE * cov).determinant());
}

ReliabilityReport reliability(std::span<const ReliabilityRecord> records,
                              std::span<const double> bin_edges,
                              std::size_t n_min, double cov_scale) {
  if (bin_edges.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "reliability needs at least two bin edges");
  }
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  ReliabilityReport report;
  for (std::size_t b = 0; b + 1 < bin_edges.size(); ++b) {
    const double lo = bin_edges[b];
    const double hi = bin_edges[b + 1];

    Eigen::Matrix3d cov_sum = Eigen::Matrix3d::Zero();
    Eigen::Vector3d err_sum = Eigen::Vector3d::Zero();
    std::vector<Eigen::Vector3d> errs;
    for (const ReliabilityRecord& r : records) {
      const double z = r.t_gt.z();
      if (z < lo || z >= hi) continue;
      cov_sum += cov_scale * r.cov_t;
      errs.push_back(r.t_star - r.t_gt);
      err_sum += errs.back();
    }

    ReliabilityBin bin;
    bin.z_lo = lo;
    bin.z_hi = hi;
    bin.n = errs.size();
    bin.sparse = bin.n < n_min;
    const double n = static_cast<double>(bin.n);
    bin.h_pred = bin.n > 0 ? gaussian_entropy(cov_sum / n) : kNaN;
    if (bin.n > 1) {
      const Eigen::Vector3d mean = err_sum / n;
      Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
      for (const Eigen::Vector3d& e : errs) {
        scatter += (e - mean) * (e - mean).transpose();
      }
      bin.h_actual = gaussian_entropy(scatter / (n - 1.0));
    } else {
      bin.h_actual = kNaN;
    }
    report.bins.push_back(bin);
  }
  return report;
}

void ReliabilityReport::write_csv(std::ostream& os) const {
  os << "z_lo,z_hi,n,H_pred,H_actual\r\n";
  for (const ReliabilityBin& b : bins) {
    os << format_number(b.z_lo) << ',' << format_number(b.z_hi) << ',' << b.n
       << ',' << format_number(b.h_pred) << ',' << format_number(b.h_actual)
       << "\r\n";
  }
}

}  // namespace probloc
