#include "probloc/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "probloc/errors.hpp"

namespace probloc {

namespace {

void check_depth(double z) {
  if (!(z > kMinDepth)) {
    throw Error(ErrorCode::kPointBehindCamera,
                "point depth " + std::to_string(z) + " m is behind the camera");
  }
}

// Derivatives of the camera-frame point (X, Y, Z) with respect to
// q = (beta, t_x, t_y, t_z, o_x, o_y, o_z). Y is linear in q, so only X and Z
// carry second derivatives.
struct CameraPointDerivatives {
  Eigen::Vector3d p;
  Eigen::Matrix<double, 3, 7> d;
  Eigen::Matrix<double, 7, 7> dd_x;
  Eigen::Matrix<double, 7, 7> dd_z;
};

CameraPointDerivatives camera_point_derivatives(const ObjectPoint& oc,
                                                const Pose& pose) {
  const double c = std::cos(pose.beta);
  const double s = std::sin(pose.beta);
  const double ox = oc.x();
  const double oy = oc.y();
  const double oz = oc.z();

  CameraPointDerivatives out;
  out.p = {c * ox + s * oz + pose.t.x(), oy + pose.t.y(),
           -s * ox + c * oz + pose.t.z()};

  const double x_beta = -s * ox + c * oz;
  const double z_beta = -c * ox - s * oz;

  out.d.setZero();
  out.d(0, 0) = x_beta;
  out.d(0, 1) = 1.0;
  out.d(0, 4) = c;
  out.d(0, 6) = s;
  out.d(1, 2) = 1.0;
  out.d(1, 5) = 1.0;
  out.d(2, 0) = z_beta;
  out.d(2, 3) = 1.0;
  out.d(2, 4) = -s;
  out.d(2, 6) = c;

  out.dd_x.setZero();
  out.dd_x(0, 0) = z_beta;
  out.dd_x(0, 4) = out.dd_x(4, 0) = -s;
  out.dd_x(0, 6) = out.dd_x(6, 0) = c;

  out.dd_z.setZero();
  out.dd_z(0, 0) = -x_beta;
  out.dd_z(0, 4) = out.dd_z(4, 0) = -c;
  out.dd_z(0, 6) = out.dd_z(6, 0) = -s;
  return out;
}

// Gradient and Hessian of f * N / Z where N is a camera-frame coordinate.
void quotient_derivatives(double f, double n, const Eigen::Matrix<double, 1, 7>& dn,
                          const Eigen::Matrix<double, 7, 7>& ddn, double z,
                          const Eigen::Matrix<double, 1, 7>& dz,
                          const Eigen::Matrix<double, 7, 7>& ddz,
                          Eigen::Matrix<double, 1, 7>& grad,
                          Eigen::Matrix<double, 7, 7>& hess) {
  const double iz = 1.0 / z;
  const double iz2 = iz * iz;
  const double iz3 = iz2 * iz;
  grad = f * (dn * iz - n * iz2 * dz);
  hess = f * (ddn * iz - (dn.transpose() * dz + dz.transpose() * dn) * iz2 -
              n * iz2 * ddz + 2.0 * n * iz3 * (dz.transpose() * dz));
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
}

void Dimensions::validate() const {
  if (!(l > 0.0) || !(h > 0.0) || !(w > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "dimensions must be positive");
  }
}

Pose Pose::from_vector(const Vector4d& p) {
  return Pose{p[0], Eigen::Vector3d(p[1], p[2], p[3])};
}

double normalize_angle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::remainder(angle, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  return a;
}

Vector4d pose_delta(const Pose& a, const Pose& b) {
  Vector4d d = a.as_vector() - b.as_vector();
  d[0] = normalize_angle(d[0]);
  return d;
}

Eigen::Matrix3d rotation_from_yaw(double beta) {
  const double c = std::cos(beta);
  const double s = std::sin(beta);
  Eigen::Matrix3d r;
  r << c, 0.0, s,
       0.0, 1.0, 0.0,
       -s, 0.0, c;
  return r;
}

ObjectPoint noc_to_oc(const NocPoint& noc, const Dimensions& dims) {
  return noc.xyz.cwiseProduct(dims.as_vector());
}

NocPoint oc_to_noc(const ObjectPoint& oc, const Dimensions& dims) {
  dims.validate();
  return NocPoint{oc.cwiseQuotient(dims.as_vector())};
}

Eigen::Vector3d to_camera(const ObjectPoint& oc, const Pose& pose) {
  return rotation_from_yaw(pose.beta) * oc + pose.t;
}

Eigen::Vector2d project(const ObjectPoint& oc, const Pose& pose,
                        const CameraIntrinsics& cam) {
  const Eigen::Vector3d p = to_camera(oc, pose);
  check_depth(p.z());
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

Eigen::Vector2d residual(const Correspondence& c, const Pose& pose,
                         const CameraIntrinsics& cam) {
  return project(c.oc, pose, cam) - c.uv_obs;
}

Eigen::Vector2d weighted_residual(const Correspondence& c, const Pose& pose,
                                  const CameraIntrinsics& cam) {
  return residual(c, pose, cam).cwiseQuotient(c.sigma.cwiseMax(kMinSigma));
}

Eigen::Matrix<double, 2, 4> residual_jacobian(const Correspondence& c,
                                              const Pose& pose,
                                              const CameraIntrinsics& cam) {
  const double cb = std::cos(pose.beta);
  const double sb = std::sin(pose.beta);
  const Eigen::Vector3d p = to_camera(c.oc, pose);
  check_depth(p.z());
  const double x_beta = -sb * c.oc.x() + cb * c.oc.z();
  const double z_beta = -cb * c.oc.x() - sb * c.oc.z();
  const double iz = 1.0 / p.z();

  Eigen::Matrix<double, 2, 4> j;
  j(0, 0) = cam.fx * (x_beta * iz - p.x() * z_beta * iz * iz);
  j(0, 1) = cam.fx * iz;
  j(0, 2) = 0.0;
  j(0, 3) = -cam.fx * p.x() * iz * iz;
  j(1, 0) = -cam.fy * p.y() * z_beta * iz * iz;
  j(1, 1) = 0.0;
  j(1, 2) = cam.fy * iz;
  j(1, 3) = -cam.fy * p.y() * iz * iz;
  return j;
}

ProjectionDerivatives projection_derivatives(const ObjectPoint& oc,
                                             const Pose& pose,
                                             const CameraIntrinsics& cam) {
  const CameraPointDerivatives cp = camera_point_derivatives(oc, pose);
  check_depth(cp.p.z());

  ProjectionDerivatives out;
  out.uv = {cam.fx * cp.p.x() / cp.p.z() + cam.cx,
            cam.fy * cp.p.y() / cp.p.z() + cam.cy};

  const Eigen::Matrix<double, 7, 7> zero = Eigen::Matrix<double, 7, 7>::Zero();
  Eigen::Matrix<double, 1, 7> grad;
  quotient_derivatives(cam.fx, cp.p.x(), cp.d.row(0), cp.dd_x, cp.p.z(),
                       cp.d.row(2), cp.dd_z, grad, out.hessian_u);
  out.jacobian.row(0) = grad;
  quotient_derivatives(cam.fy, cp.p.y(), cp.d.row(1), zero, cp.p.z(),
                       cp.d.row(2), cp.dd_z, grad, out.hessian_v);
  out.jacobian.row(1) = grad;
  return out;
}

}  // namespace probloc
