#include "probloc/scoring.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "probloc/errors.hpp"
#include "probloc/losses.hpp"
#include "probloc/random.hpp"

namespace probloc {

namespace {

using Polygon = std::vector<Eigen::Vector2d>;

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

double signed_area(const Polygon& poly) {
  double area = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    area += cross(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * area;
}

// Keeps the part of `subject` left of the directed edge a -> b.
Polygon clip_half_plane(const Polygon& subject, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b) {
  Polygon out;
  if (subject.empty()) return out;
  const Eigen::Vector2d edge = b - a;
  auto side = [&](const Eigen::Vector2d& p) { return cross(edge, p - a); };

  for (std::size_t i = 0; i < subject.size(); ++i) {
    const Eigen::Vector2d& cur = subject[i];
    const Eigen::Vector2d& nxt = subject[(i + 1) % subject.size()];
    const double sc = side(cur);
    const double sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc >= 0.0) != (sn >= 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

Polygon ccw(Polygon poly) {
  if (signed_area(poly) < 0.0) std::reverse(poly.begin(), poly.end());
  return poly;
}

}  // namespace

std::array<Eigen::Vector2d, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.pose.beta);
  const double s = std::sin(box.pose.beta);
  const double hl = 0.5 * box.dims.l;
  const double hw = 0.5 * box.dims.w;
  const std::array<Eigen::Vector2d, 4> local = {
      Eigen::Vector2d(hl, hw), Eigen::Vector2d(-hl, hw),
      Eigen::Vector2d(-hl, -hw), Eigen::Vector2d(hl, -hw)};
  std::array<Eigen::Vector2d, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    const double ox = local[i].x();
    const double oz = local[i].y();
    out[i] = {c * ox + s * oz + box.pose.t.x(), -s * ox + c * oz + box.pose.t.z()};
  }
  if (signed_area(Polygon(out.begin(), out.end())) < 0.0) {
    std::reverse(out.begin(), out.end());
  }
  return out;
}

double convex_intersection_area(const std::vector<Eigen::Vector2d>& a,
                                const std::vector<Eigen::Vector2d>& b) {
  Polygon clipped = ccw(a);
  const Polygon clip = ccw(b);
  for (std::size_t i = 0; i < clip.size() && !clipped.empty(); ++i) {
    clipped = clip_half_plane(clipped, clip[i], clip[(i + 1) % clip.size()]);
  }
  if (clipped.size() < 3) return 0.0;
  return std::abs(signed_area(clipped));
}

double iou3d(const Box3D& a, const Box3D& b) {
  const double y_top = std::max(a.pose.t.y() - a.dims.h, b.pose.t.y() - b.dims.h);
  const double y_bottom = std::min(a.pose.t.y(), b.pose.t.y());
  const double height = y_bottom - y_top;
  if (height <= 0.0) return 0.0;

  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  const double area = convex_intersection_area(Polygon(ca.begin(), ca.end()),
                                               Polygon(cb.begin(), cb.end()));
  const double inter = area * height;
  const double vol_a = a.dims.l * a.dims.h * a.dims.w;
  const double vol_b = b.dims.l * b.dims.h * b.dims.w;
  const double uni = vol_a + vol_b - inter;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

Matrix4d symmetric_sqrt(const Matrix4d& cov) {
  const Matrix4d sym = 0.5 * (cov + cov.transpose());
  const Eigen::SelfAdjointEigenSolver<Matrix4d> eig(sym);
  const Vector4d root =
      eig.eigenvalues().cwiseMax(kCovarianceEigenFloor).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

McScore mc_score(const Pose& p_star, const Matrix4d& cov, const Dimensions& dims,
                 const ScoringConfig& cfg) {
  if (cfg.n_samples < 1) {
    throw Error(ErrorCode::kInvalidArgument, "mc_score needs at least one sample");
  }
  dims.validate();
  const Matrix4d root = symmetric_sqrt(cov);
  const Box3D reference{p_star, dims};
  const Vector4d mean = p_star.as_vector();

  Rng rng(cfg.seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < cfg.n_samples; ++i) {
    Vector4d z;
    for (int k = 0; k < 4; ++k) z[k] = rng.normal();
    const Box3D sample{Pose::from_vector(mean + root * z), dims};
    const double iou = iou3d(reference, sample);
    const double f = cfg.target == ScoreTarget::kStep
                         ? target_score_step(iou, cfg.step_threshold)
                         : target_score(iou);
    sum += f;
    sum_sq += f * f;
  }
  const double n = static_cast<double>(cfg.n_samples);
  McScore out;
  out.c_3dloc = sum / n;
  if (cfg.n_samples > 1) {
    const double var = std::max(0.0, (sum_sq - n * out.c_3dloc * out.c_3dloc) / (n - 1.0));
    out.std_error = std::sqrt(var / n);
  }
  return out;
}

McScore mc_score(const PoseDistribution& dist, const Dimensions& dims,
                 const ScoringConfig& cfg) {
  return mc_score(dist.p_star, dist.cov, dims, cfg);
}

Score compose_score(double c_3dloc, double c_2d) {
  if (c_3dloc < 0.0 || c_3dloc > 1.0 || c_2d < 0.0 || c_2d > 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "scores must lie in [0, 1]");
  }
  return {c_3dloc, c_2d, c_3dloc * c_2d};
}

}  // namespace probloc
