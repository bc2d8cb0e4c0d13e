#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "probloc/geometry.hpp"
#include "probloc/scoring.hpp"

namespace probloc {

enum class DeclaredSigmaMode {
  /// Declared sigma equals the realized noise std.
  kExact,
  /// Declared sigma is the realized std times a constant (may be < 1).
  kInflated,
  /// Every point declares the same constant sigma.
  kUniform,
};

/// Per-point pixel noise: log-normal std around a median for inliers, a fixed
/// large std for contaminated points.
struct NoiseModel {
  /// Median inlier std (px). Zero gives noiseless observations.
  double sigma_median_px = 1.0;
  /// Std of log(sigma) across points.
  double sigma_log_std = 0.3;
  double outlier_frac = 0.0;
  double outlier_sigma_px = 30.0;
  DeclaredSigmaMode declared = DeclaredSigmaMode::kExact;
  /// Inflation factor (kInflated) or constant sigma (kUniform).
  double declared_param = 1.0;

  void validate() const;
  static NoiseModel noiseless();
};

/// KITTI-like pinhole camera.
CameraIntrinsics default_camera();

struct SceneConfig {
  int n_objects = 1;
  int pts_per_object = 40;
  NoiseModel noise;
  std::uint64_t seed = 0;
  CameraIntrinsics camera = default_camera();
  double image_width = 1242.0;
  double image_height = 375.0;
  double z_min = 5.0;
  double z_max = 65.0;
  int max_placement_attempts = 1000;

  void validate() const;
};

struct SceneObject {
  int id = 0;
  Pose gt_pose;
  Dimensions gt_dims;
  CorrespondenceSet correspondences;
  std::vector<NocPoint> gt_noc;
  std::vector<bool> outlier;
  /// Realized noise std per point (px).
  std::vector<Eigen::Vector2d> sigma_true;
};

struct Scene {
  SceneConfig config;
  std::vector<SceneObject> objects;
};

/// Mean car dimensions (l, h, w) used as the sampling prior.
inline const Dimensions kCarMeanDims{3.9, 1.5, 1.6};

/// Deterministic in (config, seed); each object draws from its own split
/// stream. Throws kFrustumExhausted if an object cannot be placed.
Scene generate(const SceneConfig& cfg);

/// Redraws the declared sigmas of a correspondence set under another mode,
/// keeping observations fixed.
CorrespondenceSet redeclare(const SceneObject& obj, DeclaredSigmaMode mode,
                            double param);

/// Correspondences of the non-outlier points only.
CorrespondenceSet clean_subset(const SceneObject& obj);

struct SearchBox {
  Pose center;
  /// Half extent per pose coordinate (rad, m, m, m).
  Vector4d half_width = Vector4d(0.3, 0.5, 0.5, 0.5);
};

struct GridSearchResult {
  Pose pose;
  double nll = 0.0;
  /// Best NLL after each grid pass.
  std::vector<double> level_nll;
};

/// Coarse-to-fine exhaustive search of the NLL over a 4-D grid. The window is
/// re-centred on the incumbent while the grid still improves on it and halved
/// once the centre wins, until every grid step is at most the requested
/// resolution.
GridSearchResult oracle_grid_pose(const CorrespondenceSet& cs,
                                  const SearchBox& box,
                                  const Vector4d& resolution,
                                  int points_per_axis = 9);

struct VoxelIouEstimate {
  double iou = 0.0;
  /// Binomial bound on the standard error (stratified sampling does better).
  double std_error = 0.0;
  std::size_t n_voxels = 0;
};

/// Stratified point sampling of box a, one jittered point per voxel, counting
/// the fraction inside box b. Volumes come from the dimensions.
VoxelIouEstimate oracle_voxel_iou(const Box3D& a, const Box3D& b,
                                  std::size_t n_voxels,
                                  std::uint64_t seed = 0);

}  // namespace probloc
