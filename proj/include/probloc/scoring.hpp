#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <vector>

#include "probloc/geometry.hpp"
#include "probloc/pnp_solver.hpp"

namespace probloc {

/// Oriented box standing on its bottom center: occupies y in [t_y - h, t_y].
struct Box3D {
  Pose pose;
  Dimensions dims;
};

struct Score {
  double c_3dloc = 0.0;
  double c_2d = 0.0;
  double c_3d = 0.0;
};

enum class ScoreTarget {
  kClampedLinear,
  /// Hard IoU threshold; not the default.
  kStep,
};

struct ScoringConfig {
  int n_samples = 50;
  std::uint64_t seed = 0;
  ScoreTarget target = ScoreTarget::kClampedLinear;
  double step_threshold = 0.7;
};

struct McScore {
  double c_3dloc = 0.0;
  /// Standard error of the Monte-Carlo mean.
  double std_error = 0.0;
};

/// Eigenvalue floor applied before factorizing a sampling covariance.
inline constexpr double kCovarianceEigenFloor = 1e-12;

/// Footprint corners in the (x, z) ground plane, counter-clockwise.
std::array<Eigen::Vector2d, 4> bev_corners(const Box3D& box);

/// Area of the intersection of two convex polygons (Sutherland-Hodgman).
double convex_intersection_area(const std::vector<Eigen::Vector2d>& a,
                                const std::vector<Eigen::Vector2d>& b);

/// Volumetric IoU of two yaw-oriented boxes.
double iou3d(const Box3D& a, const Box3D& b);

/// Symmetric square root V sqrt(L) V^T of a covariance, eigenvalues floored at
/// kCovarianceEigenFloor.
Matrix4d symmetric_sqrt(const Matrix4d& cov);

/// Monte-Carlo expectation of the IoU-to-score map over poses drawn from
/// N(p_star, cov), each compared against the box at p_star.
McScore mc_score(const Pose& p_star, const Matrix4d& cov, const Dimensions& dims,
                 const ScoringConfig& cfg = {});

McScore mc_score(const PoseDistribution& dist, const Dimensions& dims,
                 const ScoringConfig& cfg = {});

/// c_3d = c_3dloc * c_2d.
Score compose_score(double c_3dloc, double c_2d);

}  // namespace probloc
