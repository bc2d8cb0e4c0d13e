#include "probloc/uncertainty.hpp"

#include <cmath>

#include "probloc/errors.hpp"

namespace probloc {

namespace {

void check_ensemble(const EnsemblePrediction& ens) {
  if (ens.members() < 2) {
    throw Error(ErrorCode::kTooFewSamples, "ensemble needs at least two members");
  }
  for (const auto& member : ens.samples) {
    if (member.size() != ens.pixels()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "ensemble members cover different pixel sets");
    }
  }
}

}  // namespace

EnsembleStats ensemble_stats(const EnsemblePrediction& ens) {
  check_ensemble(ens);
  const std::size_t n_pix = ens.pixels();
  const double n = static_cast<double>(ens.members());

  EnsembleStats out;
  out.mean.assign(n_pix, ObjectPoint::Zero());
  out.variance.assign(n_pix, Eigen::Vector3d::Zero());
  for (const auto& member : ens.samples) {
    for (std::size_t p = 0; p < n_pix; ++p) out.mean[p] += member[p].oc;
  }
  for (auto& m : out.mean) m /= n;
  for (const auto& member : ens.samples) {
    for (std::size_t p = 0; p < n_pix; ++p) {
      out.variance[p] += (member[p].oc - out.mean[p]).array().square().matrix();
    }
  }
  for (auto& v : out.variance) v /= (n - 1.0);
  return out;
}

Eigen::Vector2d project_variance(const Eigen::Vector3d& var_oc) {
  return {0.5 * (var_oc.x() + var_oc.z()), var_oc.y()};
}

CombinedUncertainty combine(const EnsemblePrediction& ens) {
  const EnsembleStats stats = ensemble_stats(ens);
  const std::size_t n_pix = ens.pixels();
  const double n = static_cast<double>(ens.members());

  std::vector<Eigen::Vector2d> aleatoric(n_pix, Eigen::Vector2d::Zero());
  for (const auto& member : ens.samples) {
    for (std::size_t p = 0; p < n_pix; ++p) {
      aleatoric[p] += (2.0 * member[p].log_sigma_norm).array().exp().matrix();
    }
  }

  CombinedUncertainty out;
  out.oc_mean = stats.mean;
  out.sigma_norm.resize(n_pix);
  for (std::size_t p = 0; p < n_pix; ++p) {
    const Eigen::Vector2d var =
        aleatoric[p] / n + project_variance(stats.variance[p]);
    out.sigma_norm[p] = var.cwiseSqrt();
  }
  return out;
}

Eigen::Vector2d pixel_scale_variance(const Eigen::Vector2d& var_norm,
                                     const CameraIntrinsics& cam, double t_z) {
  if (!(t_z > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "pixel scale needs positive depth");
  }
  const double su = cam.fx / t_z;
  const double sv = cam.fy / t_z;
  return {var_norm.x() * su * su, var_norm.y() * sv * sv};
}

Eigen::Vector2d pixel_scale_sigma(const Eigen::Vector2d& sigma_norm,
                                  const CameraIntrinsics& cam, double t_z) {
  return pixel_scale_variance(sigma_norm.array().square().matrix(), cam, t_z)
      .cwiseSqrt();
}

CorrespondenceSet to_correspondences(const CombinedUncertainty& comb,
                                     const std::vector<Eigen::Vector2d>& uv_obs,
                                     const CameraIntrinsics& cam,
                                     double t_z_hint) {
  if (uv_obs.size() != comb.oc_mean.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "observed pixels do not match the ensemble pixel count");
  }
  CorrespondenceSet cs;
  cs.camera = cam;
  cs.items.reserve(uv_obs.size());
  for (std::size_t p = 0; p < uv_obs.size(); ++p) {
    Correspondence c;
    c.oc = comb.oc_mean[p];
    c.uv_obs = uv_obs[p];
    c.sigma = pixel_scale_sigma(comb.sigma_norm[p], cam, t_z_hint).cwiseMax(kMinSigma);
    cs.items.push_back(c);
  }
  return cs;
}

}  // namespace probloc
