#pragma once

#include <Eigen/Core>
#include <numbers>
#include <vector>

#include "probloc/geometry.hpp"

namespace probloc {

/// Levenberg-Marquardt settings for the uncertainty-weighted PnP.
struct SolverConfig {
  int max_iters = 100;
  /// Stop once the norm of J^T r (weighted units) falls to this value. A refine
  /// that stalls above it still counts as converged when the Gauss-Newton
  /// decrement 0.5 g^T (J^T J)^-1 g is below 1e-12 relative to the NLL.
  double grad_tol = 1e-8;
  double initial_damping = 1e-3;
  std::vector<double> multistart_yaws = {0.0, 0.5 * std::numbers::pi,
                                         std::numbers::pi,
                                         1.5 * std::numbers::pi};

  void validate() const;
};

/// MLE pose with its Gauss-Newton covariance over (beta, t_x, t_y, t_z).
struct PoseDistribution {
  Pose p_star;
  Matrix4d cov = Matrix4d::Identity();
  double nll = 0.0;
  bool converged = false;
  /// True when a ridge was added to J^T J before inversion.
  bool hessian_conditioned = false;
  int iterations = 0;
};

struct RefineResult {
  Pose pose;
  double nll = 0.0;
  double grad_norm = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct CovarianceResult {
  Matrix4d cov = Matrix4d::Identity();
  bool conditioned = false;
};

/// Implicit-function derivatives of the optimum. Column blocks follow the
/// correspondence order: (o_x, o_y, o_z) per point and (log sigma_u,
/// log sigma_v) per point.
struct PnpGradients {
  Eigen::Matrix<double, 4, Eigen::Dynamic> d_pstar_d_oc;
  Eigen::Matrix<double, 4, Eigen::Dynamic> d_pstar_d_logsigma;
};

/// Residual assigned to each coordinate of a point at or behind the camera
/// while iterating, in weighted units.
inline constexpr double kBehindCameraPenalty = 1e6;

/// 0.5 * sum of squared weighted residuals. Points behind the camera add the
/// constant penalty instead of throwing.
double negative_log_likelihood(const CorrespondenceSet& cs, const Pose& pose);

/// J^T r at the given pose.
Vector4d nll_gradient(const CorrespondenceSet& cs, const Pose& pose);

/// Back-projects the weighted pixel centroid at a depth estimated from the
/// ratio of object-point spread to pixel spread, for a fixed yaw.
Pose initial_pose(const CorrespondenceSet& cs, double yaw);

/// Single-start Levenberg-Marquardt descent of the NLL.
RefineResult refine(const CorrespondenceSet& cs, const Pose& start,
                    const SolverConfig& cfg = {});

/// Multi-start MLE of the pose plus its covariance. Throws kTooFewPoints for
/// fewer than three correspondences and kAllStartsDiverged if no start
/// reached a finite objective.
PoseDistribution solve(const CorrespondenceSet& cs,
                       const SolverConfig& cfg = {});

/// (J^T J)^-1 of the weighted residuals. A ridge of 1e-9 * trace / 4 is added
/// when the condition number exceeds 1e12.
CovarianceResult covariance(const CorrespondenceSet& cs, const Pose& p_star);

/// Exact derivatives of the optimum with respect to every object coordinate
/// and log standard deviation, -H^-1 d(J^T r)/d(input), using the full
/// Hessian of the NLL. Throws kNotConverged if the gradient at p_star exceeds
/// 100 * cfg.grad_tol and p_star is not stationary in the refine sense.
PnpGradients backward(const CorrespondenceSet& cs, const Pose& p_star,
                      const SolverConfig& cfg = {});

}  // namespace probloc
