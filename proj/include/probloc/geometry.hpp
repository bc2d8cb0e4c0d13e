#pragma once

#include <Eigen/Core>
#include <vector>

namespace probloc {

// Camera frame: x right, y down, z forward.

/// Minimum camera-frame depth (m) accepted by projection.
inline constexpr double kMinDepth = 1e-3;
/// Floor applied to every pixel standard deviation (px).
inline constexpr double kMinSigma = 1e-4;

using Vector4d = Eigen::Matrix<double, 4, 1>;
using Matrix4d = Eigen::Matrix<double, 4, 4>;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  /// Throws kInvalidArgument unless both focal lengths are positive.
  void validate() const;
};

/// Yaw about the camera y-axis plus the bottom-center translation.
/// Vector order everywhere is (beta, t_x, t_y, t_z).
struct Pose {
  double beta = 0.0;
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Vector4d as_vector() const { return {beta, t.x(), t.y(), t.z()}; }
  static Pose from_vector(const Vector4d& p);
};

/// Box length (object x), height (object y), width (object z), meters.
struct Dimensions {
  double l = 1.0;
  double h = 1.0;
  double w = 1.0;

  Eigen::Vector3d as_vector() const { return {l, h, w}; }
  void validate() const;
};

/// Metric object coordinate (m). Origin at the box bottom center, y down.
using ObjectPoint = Eigen::Vector3d;

/// Normalized object coordinate: x, z in [-0.5, 0.5], y in [-1, 0].
struct NocPoint {
  Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
};

struct Correspondence {
  ObjectPoint oc = ObjectPoint::Zero();
  Eigen::Vector2d uv_obs = Eigen::Vector2d::Zero();
  Eigen::Vector2d sigma = Eigen::Vector2d::Ones();
};

struct CorrespondenceSet {
  CameraIntrinsics camera;
  std::vector<Correspondence> items;

  std::size_t size() const { return items.size(); }
};

/// Wraps an angle into (-pi, pi].
double normalize_angle(double angle);

/// Difference a - b of two poses with the yaw component wrapped.
Vector4d pose_delta(const Pose& a, const Pose& b);

Eigen::Matrix3d rotation_from_yaw(double beta);

ObjectPoint noc_to_oc(const NocPoint& noc, const Dimensions& dims);
NocPoint oc_to_noc(const ObjectPoint& oc, const Dimensions& dims);

/// R(beta) * oc + t.
Eigen::Vector3d to_camera(const ObjectPoint& oc, const Pose& pose);

/// Pinhole projection. Throws kPointBehindCamera when depth <= kMinDepth.
Eigen::Vector2d project(const ObjectPoint& oc, const Pose& pose,
                        const CameraIntrinsics& cam);

/// Projected minus observed pixel.
Eigen::Vector2d residual(const Correspondence& c, const Pose& pose,
                         const CameraIntrinsics& cam);

/// Residual divided component-wise by the (floored) standard deviations.
Eigen::Vector2d weighted_residual(const Correspondence& c, const Pose& pose,
                                  const CameraIntrinsics& cam);

/// d(r_u, r_v) / d(beta, t_x, t_y, t_z).
Eigen::Matrix<double, 2, 4> residual_jacobian(const Correspondence& c,
                                              const Pose& pose,
                                              const CameraIntrinsics& cam);

/// First and second derivatives of the projected pixel with respect to the
/// joint variable q = (beta, t_x, t_y, t_z, o_x, o_y, o_z).
struct ProjectionDerivatives {
  Eigen::Vector2d uv = Eigen::Vector2d::Zero();
  Eigen::Matrix<double, 2, 7> jacobian = Eigen::Matrix<double, 2, 7>::Zero();
  Eigen::Matrix<double, 7, 7> hessian_u = Eigen::Matrix<double, 7, 7>::Zero();
  Eigen::Matrix<double, 7, 7> hessian_v = Eigen::Matrix<double, 7, 7>::Zero();
};

ProjectionDerivatives projection_derivatives(const ObjectPoint& oc,
                                             const Pose& pose,
                                             const CameraIntrinsics& cam);

}  // namespace probloc
