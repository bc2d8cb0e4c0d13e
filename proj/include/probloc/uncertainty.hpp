#pragma once

#include <Eigen/Core>
#include <vector>

#include "probloc/geometry.hpp"

namespace probloc {

/// Default ensemble size for epistemic sampling.
inline constexpr int kDefaultEnsembleSize = 50;

/// One ensemble member's prediction for one pixel. The log standard
/// deviations are in normalized (depth-invariant) reprojection units.
struct EnsembleSample {
  ObjectPoint oc = ObjectPoint::Zero();
  Eigen::Vector2d log_sigma_norm = Eigen::Vector2d::Zero();
};

/// samples[m][p]: member m, pixel p. Every member covers the same pixels.
struct EnsemblePrediction {
  std::vector<std::vector<EnsembleSample>> samples;

  std::size_t members() const { return samples.size(); }
  std::size_t pixels() const { return samples.empty() ? 0 : samples.front().size(); }
};

struct EnsembleStats {
  std::vector<ObjectPoint> mean;
  /// Unbiased per-axis sample variance, 1 / (N - 1).
  std::vector<Eigen::Vector3d> variance;
};

struct CombinedUncertainty {
  std::vector<ObjectPoint> oc_mean;
  /// Combined (aleatoric + epistemic) standard deviation, normalized units.
  std::vector<Eigen::Vector2d> sigma_norm;
};

/// Throws kTooFewSamples for fewer than two members and kInvalidArgument when
/// members disagree on the pixel count.
EnsembleStats ensemble_stats(const EnsemblePrediction& ens);

/// Orientation-agnostic 3D-to-2D variance approximation:
///   Var[u] ~ (Var[x] + Var[z]) / 2,  Var[v] ~ Var[y].
Eigen::Vector2d project_variance(const Eigen::Vector3d& var_oc);

/// Per pixel: mean aleatoric variance across members plus the projected
/// epistemic variance.
CombinedUncertainty combine(const EnsemblePrediction& ens);

/// Converts a normalized variance to pixel units with (f / t_z)^2, using fx for
/// the u-component and fy for the v-component.
Eigen::Vector2d pixel_scale_variance(const Eigen::Vector2d& var_norm,
                                     const CameraIntrinsics& cam, double t_z);

/// Standard-deviation form of pixel_scale_variance.
Eigen::Vector2d pixel_scale_sigma(const Eigen::Vector2d& sigma_norm,
                                  const CameraIntrinsics& cam, double t_z);

/// Builds PnP input from combined uncertainty and observed pixels, scaling the
/// normalized sigmas with a depth hint.
CorrespondenceSet to_correspondences(const CombinedUncertainty& comb,
                                     const std::vector<Eigen::Vector2d>& uv_obs,
                                     const CameraIntrinsics& cam,
                                     double t_z_hint);

}  // namespace probloc
