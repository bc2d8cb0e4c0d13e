#include "probloc/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "probloc/errors.hpp"
#include "probloc/pnp_solver.hpp"
#include "probloc/random.hpp"

namespace probloc {

namespace {

// Minimum camera-frame depth of any box corner for a placement to count.
constexpr double kMinCornerDepth = 1.0;

constexpr int kMaxGridLevels = 400;

struct Face {
  Eigen::Vector3d normal;  // object frame, outward
  Eigen::Vector3d center;
  Eigen::Vector3d axis_a;  // half-extent vectors spanning the face
  Eigen::Vector3d axis_b;
  double area;
};

// The five faces other than the bottom (ground contact, y = 0).
std::array<Face, 5> box_faces(const Dimensions& d) {
  const double hl = 0.5 * d.l;
  const double hh = 0.5 * d.h;
  const double hw = 0.5 * d.w;
  const Eigen::Vector3d mid(0.0, -hh, 0.0);
  return {{
      {{1, 0, 0}, mid + Eigen::Vector3d(hl, 0, 0), {0, hh, 0}, {0, 0, hw}, d.h * d.w},
      {{-1, 0, 0}, mid - Eigen::Vector3d(hl, 0, 0), {0, hh, 0}, {0, 0, hw}, d.h * d.w},
      {{0, -1, 0}, {0, -d.h, 0}, {hl, 0, 0}, {0, 0, hw}, d.l * d.w},
      {{0, 0, 1}, mid + Eigen::Vector3d(0, 0, hw), {hl, 0, 0}, {0, hh, 0}, d.l * d.h},
      {{0, 0, -1}, mid - Eigen::Vector3d(0, 0, hw), {hl, 0, 0}, {0, hh, 0}, d.l * d.h},
  }};
}

std::array<ObjectPoint, 8> box_corners(const Dimensions& d) {
  std::array<ObjectPoint, 8> out;
  std::size_t i = 0;
  for (const double sx : {-0.5, 0.5}) {
    for (const double y : {-d.h, 0.0}) {
      for (const double sz : {-0.5, 0.5}) out[i++] = {sx * d.l, y, sz * d.w};
    }
  }
  return out;
}

Dimensions sample_dims(Rng& rng) {
  auto draw = [&](double mean) {
    return std::max(0.5 * mean, mean * (1.0 + 0.1 * rng.normal()));
  };
  Dimensions d;
  d.l = draw(kCarMeanDims.l);
  d.h = draw(kCarMeanDims.h);
  d.w = draw(kCarMeanDims.w);
  return d;
}

Pose place(const SceneConfig& cfg, const Dimensions& dims, Rng& rng) {
  const CameraIntrinsics& cam = cfg.camera;
  const auto corners = box_corners(dims);
  const double margin = 0.05 * cfg.image_width;
  for (int attempt = 0; attempt < cfg.max_placement_attempts; ++attempt) {
    Pose pose;
    const double z = rng.uniform(cfg.z_min, cfg.z_max);
    const double u = rng.uniform(margin, cfg.image_width - margin);
    pose.t = {(u - cam.cx) * z / cam.fx, rng.uniform(1.4, 1.9), z};
    pose.beta = normalize_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));

    const bool in_front = std::all_of(corners.begin(), corners.end(), [&](const auto& c) {
      return to_camera(c, pose).z() > kMinCornerDepth;
    });
    if (!in_front) continue;
    const Eigen::Vector2d center =
        project(ObjectPoint(0.0, -0.5 * dims.h, 0.0), pose, cam);
    if (center.x() < 0.0 || center.x() > cfg.image_width || center.y() < 0.0 ||
        center.y() > cfg.image_height) {
      continue;
    }
    return pose;
  }
  throw Error(ErrorCode::kFrustumExhausted,
              "could not place an object inside the viewing frustum");
}

Eigen::Vector2d declared_sigma(const Eigen::Vector2d& sigma_true,
                               DeclaredSigmaMode mode, double param) {
  switch (mode) {
    case DeclaredSigmaMode::kExact:
      return sigma_true.cwiseMax(kMinSigma);
    case DeclaredSigmaMode::kInflated:
      return (param * sigma_true).cwiseMax(kMinSigma);
    case DeclaredSigmaMode::kUniform:
      return Eigen::Vector2d::Constant(std::max(param, kMinSigma));
  }
  return sigma_true;
}

double grid_nll(const CorrespondenceSet& cs, const Vector4d& p) {
  return negative_log_likelihood(cs, Pose::from_vector(p));
}

}  // namespace

void NoiseModel::validate() const {
  const bool ok = sigma_median_px >= 0.0 && sigma_log_std >= 0.0 &&
                  outlier_frac >= 0.0 && outlier_frac < 1.0 &&
                  outlier_sigma_px > 0.0 && declared_param > 0.0;
  if (!ok) throw Error(ErrorCode::kInvalidArgument, "invalid noise model");
}

NoiseModel NoiseModel::noiseless() {
  NoiseModel n;
  n.sigma_median_px = 0.0;
  n.sigma_log_std = 0.0;
  n.declared = DeclaredSigmaMode::kUniform;
  n.declared_param = 1.0;
  return n;
}

CameraIntrinsics default_camera() {
  return {721.5377, 721.5377, 609.5593, 172.854};
}

void SceneConfig::validate() const {
  if (n_objects < 0) {
    throw Error(ErrorCode::kInvalidArgument, "object count must be non-negative");
  }
  if (pts_per_object < 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "each object needs at least 3 points, got " +
                    std::to_string(pts_per_object));
  }
  if (!(z_min > 0.0) || !(z_max > z_min) || max_placement_attempts < 1) {
    throw Error(ErrorCode::kInvalidArgument, "invalid placement range");
  }
  camera.validate();
  noise.validate();
}

Scene generate(const SceneConfig& cfg) {
  cfg.validate();
  Scene scene;
  scene.config = cfg;
  const Rng root(cfg.seed);
  const NoiseModel& noise = cfg.noise;

  for (int id = 0; id < cfg.n_objects; ++id) {
    Rng rng = root.split(static_cast<std::uint64_t>(id));
    SceneObject obj;
    obj.id = id;
    obj.gt_dims = sample_dims(rng);
    obj.gt_pose = place(cfg, obj.gt_dims, rng);
    obj.correspondences.camera = cfg.camera;

    const auto faces = box_faces(obj.gt_dims);
    const Eigen::Matrix3d rot = rotation_from_yaw(obj.gt_pose.beta);
    std::vector<double> weights;
    for (const Face& f : faces) {
      const Eigen::Vector3d center = rot * f.center + obj.gt_pose.t;
      const bool visible = (rot * f.normal).dot(-center) > 0.0;
      weights.push_back(visible ? f.area : 0.0);
    }
    if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
      for (std::size_t i = 0; i < faces.size(); ++i) weights[i] = faces[i].area;
    }
    std::discrete_distribution<std::size_t> pick_face(weights.begin(), weights.end());

    for (int k = 0; k < cfg.pts_per_object; ++k) {
      const Face& f = faces[pick_face(rng.engine())];
      const double a = rng.uniform(-1.0, 1.0);
      const double b = rng.uniform(-1.0, 1.0);
      const ObjectPoint surface = f.center + a * f.axis_a + b * f.axis_b;
      const NocPoint noc = oc_to_noc(surface, obj.gt_dims);
      const ObjectPoint oc = noc_to_oc(noc, obj.gt_dims);

      const bool is_outlier = rng.bernoulli(noise.outlier_frac);
      Eigen::Vector2d sigma_true;
      if (is_outlier) {
        sigma_true.setConstant(noise.outlier_sigma_px);
      } else {
        const double su = rng.normal();
        const double sv = rng.normal();
        sigma_true = {noise.sigma_median_px * std::exp(noise.sigma_log_std * su),
                      noise.sigma_median_px * std::exp(noise.sigma_log_std * sv)};
      }
      const double nu = rng.normal();
      const double nv = rng.normal();

      Correspondence c;
      c.oc = oc;
      c.uv_obs = project(oc, obj.gt_pose, cfg.camera) +
                 Eigen::Vector2d(sigma_true.x() * nu, sigma_true.y() * nv);
      c.sigma = declared_sigma(sigma_true, noise.declared, noise.declared_param);

      obj.gt_noc.push_back(noc);
      obj.outlier.push_back(is_outlier);
      obj.sigma_true.push_back(sigma_true);
      obj.correspondences.items.push_back(c);
    }
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

CorrespondenceSet redeclare(const SceneObject& obj, DeclaredSigmaMode mode,
                            double param) {
  CorrespondenceSet cs = obj.correspondences;
  for (std::size_t i = 0; i < cs.items.size(); ++i) {
    cs.items[i].sigma = declared_sigma(obj.sigma_true[i], mode, param);
  }
  return cs;
}

CorrespondenceSet clean_subset(const SceneObject& obj) {
  CorrespondenceSet cs;
  cs.camera = obj.correspondences.camera;
  for (std::size_t i = 0; i < obj.correspondences.items.size(); ++i) {
    if (!obj.outlier[i]) cs.items.push_back(obj.correspondences.items[i]);
  }
  return cs;
}

GridSearchResult oracle_grid_pose(const CorrespondenceSet& cs,
                                  const SearchBox& box,
                                  const Vector4d& resolution,
                                  int points_per_axis) {
  if (points_per_axis < 3 || points_per_axis % 2 == 0) {
    throw Error(ErrorCode::kInvalidArgument, "grid needs an odd count >= 3 per axis");
  }
  if ((resolution.array() <= 0.0).any()) {
    throw Error(ErrorCode::kInvalidArgument, "grid resolution must be positive");
  }
  const int k = points_per_axis;
  Vector4d center = box.center.as_vector();
  Vector4d half = box.half_width;
  double best_nll = grid_nll(cs, center);

  GridSearchResult out;
  for (int level = 0; level < kMaxGridLevels; ++level) {
    const Vector4d step = 2.0 * half / static_cast<double>(k - 1);
    Vector4d best = center;
    bool moved = false;
    const Vector4d origin = center - half;
    for (int i0 = 0; i0 < k; ++i0) {
      for (int i1 = 0; i1 < k; ++i1) {
        for (int i2 = 0; i2 < k; ++i2) {
          for (int i3 = 0; i3 < k; ++i3) {
            const Vector4d p =
                origin + step.cwiseProduct(Vector4d(i0, i1, i2, i3));
            const double nll = grid_nll(cs, p);
            if (nll < best_nll) {
              best_nll = nll;
              best = p;
              moved = true;
            }
          }
        }
      }
    }
    center = best;
    out.level_nll.push_back(best_nll);
    if (moved) continue;
    if ((step.array() <= resolution.array()).all()) break;
    half *= 0.5;
  }
  out.pose = Pose::from_vector(center);
  out.pose.beta = normalize_angle(out.pose.beta);
  out.nll = best_nll;
  return out;
}

VoxelIouEstimate oracle_voxel_iou(const Box3D& a, const Box3D& b,
                                  std::size_t n_voxels, std::uint64_t seed) {
  a.dims.validate();
  b.dims.validate();
  const double vol_a = a.dims.l * a.dims.h * a.dims.w;
  const double vol_b = b.dims.l * b.dims.h * b.dims.w;
  const double side = std::cbrt(vol_a / static_cast<double>(std::max<std::size_t>(n_voxels, 1)));
  const auto cells = [&](double extent) {
    return std::max<long>(1, std::lround(extent / side));
  };
  const long nx = cells(a.dims.l);
  const long ny = cells(a.dims.h);
  const long nz = cells(a.dims.w);
  const Eigen::Vector3d cell(a.dims.l / nx, a.dims.h / ny, a.dims.w / nz);
  const Eigen::Vector3d lower(-0.5 * a.dims.l, -a.dims.h, -0.5 * a.dims.w);

  const Eigen::Matrix3d rot_a = rotation_from_yaw(a.pose.beta);
  const Eigen::Matrix3d rot_b_inv = rotation_from_yaw(b.pose.beta).transpose();
  Rng rng(seed);
  std::size_t inside = 0;
  for (long ix = 0; ix < nx; ++ix) {
    for (long iy = 0; iy < ny; ++iy) {
      for (long iz = 0; iz < nz; ++iz) {
        const Eigen::Vector3d jitter(rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0),
                                     rng.uniform(0.0, 1.0));
        const Eigen::Vector3d local =
            lower + cell.cwiseProduct(Eigen::Vector3d(ix, iy, iz) + jitter);
        const Eigen::Vector3d q = rot_b_inv * (rot_a * local + a.pose.t - b.pose.t);
        if (std::abs(q.x()) <= 0.5 * b.dims.l && q.y() <= 0.0 &&
            q.y() >= -b.dims.h && std::abs(q.z()) <= 0.5 * b.dims.w) {
          ++inside;
        }
      }
    }
  }

  VoxelIouEstimate out;
  out.n_voxels = static_cast<std::size_t>(nx * ny * nz);
  const double n = static_cast<double>(out.n_voxels);
  const double frac = static_cast<double>(inside) / n;
  const double inter = vol_a * frac;
  const double uni = vol_a + vol_b - inter;
  out.iou = inter / uni;
  const double se_frac = std::sqrt((frac * (1.0 - frac) + 1.0 / n) / n);
  out.std_error = vol_a * se_frac * (vol_a + vol_b) / (uni * uni);
  return out;
}

}  // namespace probloc
