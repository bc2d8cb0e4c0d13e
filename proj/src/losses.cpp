#include "probloc/losses.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "probloc/errors.hpp"

namespace probloc {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

KlEval gaussian_kl(double mu, double y, double log_sigma) {
  const double d = mu - y;
  const double inv_var = std::exp(-2.0 * log_sigma);
  return {0.5 * d * d * inv_var + log_sigma, d * inv_var,
          1.0 - d * d * inv_var};
}

KlEval laplacian_kl(double mu, double y, double log_sigma) {
  const double d = mu - y;
  const double inv_sigma = std::exp(-log_sigma);
  const double a = kSqrt2 * std::abs(d) * inv_sigma;
  return {a + log_sigma, kSqrt2 * sign(d) * inv_sigma, 1.0 - a};
}

KlEval mixed_kl(double mu, double y, double log_sigma) {
  const double inv_sigma = std::exp(-log_sigma);
  const double e = (mu - y) * inv_sigma;
  if (std::abs(e) <= kSqrt2) {
    return {0.5 * e * e + log_sigma, e * inv_sigma, 1.0 - e * e};
  }
  const double a = kSqrt2 * std::abs(e);
  return {a - 1.0 + log_sigma, kSqrt2 * sign(e) * inv_sigma, 1.0 - a};
}

WeightNormalizer WeightNormalizer::updated(
    std::span<const double> sigmas) const {
  if (sigmas.empty()) {
    throw Error(ErrorCode::kEmptyBatch, "normalizer update needs a nonempty batch");
  }
  double sum = 0.0;
  for (const double s : sigmas) {
    if (!(s >= kMinSigma)) {
      throw Error(ErrorCode::kInvalidArgument, "sigma below floor in batch");
    }
    sum += 1.0 / s;
  }
  const double batch_mean = sum / static_cast<double>(sigmas.size());
  return {alpha * w_hat + (1.0 - alpha) * batch_mean, alpha};
}

KlEval robust_kl(double mu, double y, double log_sigma,
                 const WeightNormalizer& norm) {
  if (!(norm.w_hat > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "normalizer weight must be positive");
  }
  const KlEval m = mixed_kl(mu, y, log_sigma);
  const double s = 1.0 / norm.w_hat;
  return {m.value * s, m.d_mu * s, m.d_log_sigma * s};
}

SmoothL1Eval smooth_l1(double x, double beta) {
  if (!(beta > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "smooth L1 beta must be positive");
  }
  const double ax = std::abs(x);
  if (ax < beta) return {0.5 * x * x / beta, x / beta};
  return {ax - 0.5 * beta, sign(x)};
}

MaskedLossEval masked_noc_loss(std::span<const double> pred,
                               std::span<const double> target,
                               std::span<const double> mask, double beta) {
  if (pred.size() != target.size() || pred.size() != mask.size()) {
    throw Error(ErrorCode::kInvalidArgument, "NOC loss inputs differ in length");
  }
  double weight_sum = 0.0;
  for (const double w : mask) weight_sum += w;
  if (!(weight_sum > 0.0)) {
    throw Error(ErrorCode::kEmptyMask, "NOC loss mask selects no entries");
  }

  MaskedLossEval out;
  out.d_pred = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pred.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const SmoothL1Eval e = smooth_l1(pred[i] - target[i], beta);
    out.value += mask[i] * e.value;
    out.d_pred[static_cast<Eigen::Index>(i)] = mask[i] * e.d_x / weight_sum;
  }
  out.value /= weight_sum;
  return out;
}

CalibLossEval calib_loss(const Vector4d& pose_error, const Matrix4d& raw_cov,
                         const Vector4d& k) {
  const Eigen::LLT<Matrix4d> llt(raw_cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kSingularCovariance,
                "pose covariance is not positive definite");
  }
  // Sigma^-1 = D^-1 C^-1 D^-1, so whiten the error by D first.
  const Vector4d a = pose_error.cwiseProduct((-k).array().exp().matrix());
  const Vector4d c_inv_a = llt.solve(a);
  const double log_det_raw =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

  CalibLossEval out;
  out.value = 0.5 * a.dot(c_inv_a) + 0.5 * log_det_raw + k.sum();
  out.d_k = Vector4d::Ones() - c_inv_a.cwiseProduct(a);
  return out;
}

CalibLossEval calib_loss(const Pose& p_star, const Pose& p_gt,
                         const Matrix4d& raw_cov, const Vector4d& k) {
  return calib_loss(pose_delta(p_star, p_gt), raw_cov, k);
}

BceEval score_bce(double c_pred, double c_target) {
  const double c = std::clamp(c_pred, kBceEpsilon, 1.0 - kBceEpsilon);
  BceEval out;
  out.value = -c_target * std::log(c) - (1.0 - c_target) * std::log1p(-c);
  out.d_pred = (c_pred == c) ? (-c_target / c + (1.0 - c_target) / (1.0 - c))
                             : 0.0;
  out.d_target = -std::log(c) + std::log1p(-c);
  return out;
}

double target_score(double iou3d) {
  return std::max(0.0, std::min(1.0, 2.0 * iou3d - 0.5));
}

double target_score_step(double iou3d, double threshold) {
  return iou3d >= threshold ? 1.0 : 0.0;
}

E2eLossEval e2e_losses(const Pose& p_star, const Pose& p_gt, double beta) {
  E2eLossEval out;

  const Eigen::Vector3d dt = p_star.t - p_gt.t;
  const double dt_norm = dt.norm();
  const SmoothL1Eval lt = smooth_l1(dt_norm, beta);
  out.trans = lt.value;
  if (dt_norm > 0.0) out.d_trans.tail<3>() = lt.d_x * dt / dt_norm;

  const Eigen::Vector2d dr(std::cos(p_star.beta) - std::cos(p_gt.beta),
                           std::sin(p_star.beta) - std::sin(p_gt.beta));
  const double dr_norm = dr.norm();
  const SmoothL1Eval lr = smooth_l1(dr_norm, beta);
  out.rot = lr.value;
  if (dr_norm > 0.0) {
    const Eigen::Vector2d d_embed(-std::sin(p_star.beta), std::cos(p_star.beta));
    out.d_rot[0] = lr.d_x * dr.dot(d_embed) / dr_norm;
  }
  return out;
}

}  // namespace probloc
