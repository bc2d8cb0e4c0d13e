#include "probloc/pnp_solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>

#include "probloc/errors.hpp"

namespace probloc {

namespace {

constexpr double kMaxConditionNumber = 1e12;
constexpr double kRidgeFactor = 1e-9;
constexpr double kMaxDamping = 1e16;
constexpr double kNllTieTolerance = 1e-12;

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

bool in_front(const ObjectPoint& oc, const Pose& pose) {
  return to_camera(oc, pose).z() > kMinDepth;
}

struct Linearization {
  double nll = 0.0;
  Matrix4d jtj = Matrix4d::Zero();
  Vector4d jtr = Vector4d::Zero();
};

Linearization linearize(const CorrespondenceSet& cs, const Pose& pose) {
  Linearization lin;
  for (const Correspondence& c : cs.items) {
    if (!in_front(c.oc, pose)) {
      lin.nll += kBehindCameraPenalty * kBehindCameraPenalty;
      continue;
    }
    const Eigen::Vector2d inv_sigma =
        c.sigma.cwiseMax(kMinSigma).cwiseInverse();
    const Eigen::Vector2d r = residual(c, pose, cs.camera).cwiseProduct(inv_sigma);
    const Eigen::Matrix<double, 2, 4> j =
        inv_sigma.asDiagonal() * residual_jacobian(c, pose, cs.camera);
    lin.nll += 0.5 * r.squaredNorm();
    lin.jtj.noalias() += j.transpose() * j;
    lin.jtr.noalias() += j.transpose() * r;
  }
  return lin;
}

void check_size(const CorrespondenceSet& cs) {
  if (cs.size() < 3) {
    throw Error(ErrorCode::kTooFewPoints,
                "PnP needs at least 3 correspondences, got " +
                    std::to_string(cs.size()));
  }
}

}  // namespace

void SolverConfig::validate() const {
  if (max_iters < 1 || !(grad_tol > 0.0) || !(initial_damping > 0.0) ||
      multistart_yaws.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "invalid solver configuration");
  }
}

double negative_log_likelihood(const CorrespondenceSet& cs, const Pose& pose) {
  double nll = 0.0;
  for (const Correspondence& c : cs.items) {
    if (!in_front(c.oc, pose)) {
      nll += kBehindCameraPenalty * kBehindCameraPenalty;
      continue;
    }
    nll += 0.5 * weighted_residual(c, pose, cs.camera).squaredNorm();
  }
  return nll;
}

Vector4d nll_gradient(const CorrespondenceSet& cs, const Pose& pose) {
  return linearize(cs, pose).jtr;
}

Pose initial_pose(const CorrespondenceSet& cs, double yaw) {
  const CameraIntrinsics& cam = cs.camera;
  double weight_sum = 0.0;
  Eigen::Vector3d oc_mean = Eigen::Vector3d::Zero();
  Eigen::Vector2d uv_mean = Eigen::Vector2d::Zero();
  for (const Correspondence& c : cs.items) {
    const double w = 1.0 / c.sigma.cwiseMax(kMinSigma).squaredNorm();
    weight_sum += w;
    oc_mean += w * c.oc;
    uv_mean += w * c.uv_obs;
  }
  oc_mean /= weight_sum;
  uv_mean /= weight_sum;

  std::vector<double> oc_spread;
  std::vector<double> uv_spread;
  oc_spread.reserve(cs.size());
  uv_spread.reserve(cs.size());
  for (const Correspondence& c : cs.items) {
    oc_spread.push_back((c.oc - oc_mean).norm());
    uv_spread.push_back((c.uv_obs - uv_mean).norm());
  }
  const double px = median(uv_spread);
  const double obj = median(oc_spread);
  double depth = (px > 0.0 && obj > 0.0) ? cam.fx * obj / px : 10.0;
  if (!std::isfinite(depth) || depth <= kMinDepth) depth = 10.0;

  const Eigen::Vector3d centroid((uv_mean.x() - cam.cx) / cam.fx * depth,
                                 (uv_mean.y() - cam.cy) / cam.fy * depth,
                                 depth);
  Pose pose;
  pose.beta = normalize_angle(yaw);
  pose.t = centroid - rotation_from_yaw(pose.beta) * oc_mean;
  return pose;
}

namespace {

// Stationary when the gradient is below tolerance or when the Gauss-Newton
// decrement 0.5 g^T (J^T J)^-1 g, the decrease still on offer, is below the
// resolution of the objective.
bool stationary(const Linearization& lin, double grad_tol) {
  if (lin.jtr.norm() <= grad_tol) return true;
  const Eigen::LDLT<Matrix4d> ldlt(lin.jtj);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
  const double decrement = 0.5 * lin.jtr.dot(ldlt.solve(lin.jtr));
  return std::isfinite(decrement) &&
         decrement <= kNllTieTolerance * (1.0 + std::abs(lin.nll));
}

}  // namespace

RefineResult refine(const CorrespondenceSet& cs, const Pose& start,
                    const SolverConfig& cfg) {
  check_size(cs);
  cfg.validate();

  RefineResult out;
  out.pose = start;
  Linearization lin = linearize(cs, out.pose);
  out.nll = lin.nll;
  if (!std::isfinite(out.nll)) return out;

  double damping = cfg.initial_damping;
  while (out.iterations < cfg.max_iters) {
    if (lin.jtr.norm() <= cfg.grad_tol) break;
    ++out.iterations;

    Matrix4d a = lin.jtj;
    const double diag_floor =
        1e-12 * std::max(1.0, lin.jtj.diagonal().maxCoeff());
    for (int i = 0; i < 4; ++i) {
      a(i, i) += damping * std::max(lin.jtj(i, i), diag_floor);
    }
    const Vector4d step = a.ldlt().solve(-lin.jtr);
    const Pose candidate = Pose::from_vector(out.pose.as_vector() + step);
    const double candidate_nll = negative_log_likelihood(cs, candidate);

    bool accept = std::isfinite(candidate_nll) && candidate_nll < out.nll;
    Linearization candidate_lin;
    if (accept) {
      candidate_lin = linearize(cs, candidate);
    } else if (std::isfinite(candidate_nll) &&
               candidate_nll <= out.nll + kNllTieTolerance * (1.0 + out.nll)) {
      // Within the resolution of the NLL, progress is judged by the gradient.
      candidate_lin = linearize(cs, candidate);
      accept = candidate_lin.jtr.norm() < lin.jtr.norm();
    }
    if (accept) {
      out.pose = candidate;
      out.pose.beta = normalize_angle(out.pose.beta);
      lin = candidate_lin;
      out.nll = lin.nll;
      damping = std::max(damping / 10.0, 1e-12);
    } else {
      damping *= 10.0;
      if (damping > kMaxDamping) break;
    }
  }
  out.grad_norm = lin.jtr.norm();
  out.converged = stationary(lin, cfg.grad_tol);
  return out;
}

PoseDistribution solve(const CorrespondenceSet& cs, const SolverConfig& cfg) {
  check_size(cs);
  cfg.validate();
  cs.camera.validate();

  RefineResult best;
  best.nll = std::numeric_limits<double>::infinity();
  int total_iterations = 0;
  for (const double yaw : cfg.multistart_yaws) {
    const RefineResult r = refine(cs, initial_pose(cs, yaw), cfg);
    total_iterations += r.iterations;
    if (std::isfinite(r.nll) && r.nll < best.nll) best = r;
  }
  if (!std::isfinite(best.nll)) {
    throw Error(ErrorCode::kAllStartsDiverged,
                "no PnP start reached a finite objective");
  }

  const CovarianceResult cov = covariance(cs, best.pose);
  PoseDistribution out;
  out.p_star = best.pose;
  out.cov = cov.cov;
  out.nll = best.nll;
  out.converged = best.converged;
  out.hessian_conditioned = cov.conditioned;
  out.iterations = total_iterations;
  return out;
}

CovarianceResult covariance(const CorrespondenceSet& cs, const Pose& p_star) {
  Matrix4d jtj = linearize(cs, p_star).jtj;
  CovarianceResult out;

  const Eigen::SelfAdjointEigenSolver<Matrix4d> eig(jtj, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxConditionNumber) {
    double ridge = kRidgeFactor * jtj.trace() / 4.0;
    if (!(ridge > 0.0)) ridge = kRidgeFactor;
    jtj.diagonal().array() += ridge;
    out.conditioned = true;
  }
  const Matrix4d inv = jtj.ldlt().solve(Matrix4d::Identity());
  out.cov = 0.5 * (inv + inv.transpose());
  return out;
}

PnpGradients backward(const CorrespondenceSet& cs, const Pose& p_star,
                      const SolverConfig& cfg) {
  check_size(cs);
  const auto n = static_cast<Eigen::Index>(cs.size());

  Matrix4d hessian = Matrix4d::Zero();
  Vector4d gradient = Vector4d::Zero();
  Eigen::Matrix<double, 4, Eigen::Dynamic> dg_doc(4, 3 * n);
  Eigen::Matrix<double, 4, Eigen::Dynamic> dg_dls(4, 2 * n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const Correspondence& c = cs.items[static_cast<std::size_t>(i)];
    const ProjectionDerivatives d = projection_derivatives(c.oc, p_star, cs.camera);
    Eigen::Matrix<double, 4, 3> dg_doc_i = Eigen::Matrix<double, 4, 3>::Zero();
    for (int k = 0; k < 2; ++k) {
      const double sigma = std::max(c.sigma[k], kMinSigma);
      const double w = 1.0 / (sigma * sigma);
      const double r = d.uv[k] - c.uv_obs[k];
      const auto& hess = (k == 0) ? d.hessian_u : d.hessian_v;
      const Vector4d jp = d.jacobian.block<1, 4>(k, 0).transpose();
      const Eigen::Matrix<double, 1, 3> jo = d.jacobian.block<1, 3>(k, 4);

      gradient += w * r * jp;
      hessian += w * (jp * jp.transpose() + r * hess.block<4, 4>(0, 0));
      dg_doc_i += w * (jp * jo + r * hess.block<4, 3>(0, 4));
      // A floored sigma no longer depends on its log.
      dg_dls.col(2 * i + k) =
          (c.sigma[k] >= kMinSigma) ? Vector4d(-2.0 * w * r * jp) : Vector4d::Zero();
    }
    dg_doc.block<4, 3>(0, 3 * i) = dg_doc_i;
  }

  const Linearization lin = linearize(cs, p_star);
  if (gradient.norm() > 100.0 * cfg.grad_tol && !stationary(lin, cfg.grad_tol)) {
    throw Error(ErrorCode::kNotConverged,
                "PnP backward requires a stationary point");
  }
  const Eigen::FullPivLU<Matrix4d> lu(hessian);
  if (!lu.isInvertible()) {
    throw Error(ErrorCode::kSingularCovariance, "NLL Hessian is singular");
  }
  PnpGradients out;
  out.d_pstar_d_oc = -lu.solve(dg_doc);
  out.d_pstar_d_logsigma = -lu.solve(dg_dls);
  return out;
}

}  // namespace probloc
