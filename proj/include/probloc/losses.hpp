#pragma once

#include <Eigen/Core>
#include <span>

#include "probloc/geometry.hpp"

namespace probloc {

/// Default weight of the covariance calibration term in a joint objective.
inline constexpr double kCalibLossWeight = 0.01;
/// Probability clamp for the binary cross-entropy.
inline constexpr double kBceEpsilon = 1e-7;

/// Value and gradient of a univariate heteroscedastic loss. The scale is
/// parameterized as log sigma.
struct KlEval {
  double value = 0.0;
  double d_mu = 0.0;
  double d_log_sigma = 0.0;
};

struct SmoothL1Eval {
  double value = 0.0;
  double d_x = 0.0;
};

struct BceEval {
  double value = 0.0;
  double d_pred = 0.0;
  double d_target = 0.0;
};

struct MaskedLossEval {
  double value = 0.0;
  Eigen::VectorXd d_pred;
};

struct CalibLossEval {
  double value = 0.0;
  Vector4d d_k = Vector4d::Zero();
};

struct E2eLossEval {
  double trans = 0.0;
  double rot = 0.0;
  /// d trans / d (beta*, t*)
  Vector4d d_trans = Vector4d::Zero();
  /// d rot / d (beta*, t*)
  Vector4d d_rot = Vector4d::Zero();
};

/// (mu - y)^2 / (2 sigma^2) + log sigma.
KlEval gaussian_kl(double mu, double y, double log_sigma);

/// sqrt(2) |mu - y| / sigma + log sigma. The mu-gradient at mu == y is the
/// zero subgradient.
KlEval laplacian_kl(double mu, double y, double log_sigma);

/// Gaussian core for |e| <= sqrt(2), Laplacian tail beyond, e = (mu - y) / sigma.
/// C1 in both mu and log sigma.
KlEval mixed_kl(double mu, double y, double log_sigma);

/// Running estimate of the mean weight E[1 / sigma].
///
/// The estimate is a buffer: losses divide by it but do not differentiate
/// through it. A single instance must only be updated from one thread.
struct WeightNormalizer {
  double w_hat = 1.0;
  double alpha = 0.99;

  /// Exponential moving average step over one batch of standard deviations.
  /// Throws kEmptyBatch for an empty batch and kInvalidArgument for any
  /// sigma below kMinSigma.
  [[nodiscard]] WeightNormalizer updated(std::span<const double> sigmas) const;
};

/// mixed_kl divided by the normalizer's current mean weight.
KlEval robust_kl(double mu, double y, double log_sigma,
                 const WeightNormalizer& norm);

/// Huber form: 0.5 x^2 / beta inside |x| < beta, |x| - beta / 2 outside.
SmoothL1Eval smooth_l1(double x, double beta = 1.0);

/// Mask-weighted mean of smooth_l1(pred - target). Mask entries are 0 or 1.
/// Throws kEmptyMask when no entry is selected.
MaskedLossEval masked_noc_loss(std::span<const double> pred,
                               std::span<const double> target,
                               std::span<const double> mask,
                               double beta = 1.0);

/// Multivariate Gaussian KL of a pose error under a calibrated covariance
/// exp(diag k) * raw_cov * exp(diag k):
///   0.5 dp^T Sigma^-1 dp + 0.5 log det Sigma.
/// The pose error is treated as a constant; the gradient is taken with
/// respect to k only. Throws kSingularCovariance when raw_cov is not SPD.
CalibLossEval calib_loss(const Vector4d& pose_error, const Matrix4d& raw_cov,
                         const Vector4d& k = Vector4d::Zero());

/// Pose overload; the yaw error is wrapped before evaluation.
CalibLossEval calib_loss(const Pose& p_star, const Pose& p_gt,
                         const Matrix4d& raw_cov,
                         const Vector4d& k = Vector4d::Zero());

/// -t log c - (1 - t) log(1 - c), with c clamped to [eps, 1 - eps].
BceEval score_bce(double c_pred, double c_target);

/// Clamped-linear IoU-to-score map max(0, min(1, 2 IoU - 0.5)).
double target_score(double iou3d);

/// Hard-threshold alternative: 1 when iou3d >= threshold, else 0.
double target_score_step(double iou3d, double threshold);

/// Smooth L1 on the translation error norm and on the distance between the
/// (cos, sin) yaw embeddings.
E2eLossEval e2e_losses(const Pose& p_star, const Pose& p_gt,
                       double beta = 1.0);

}  // namespace probloc
