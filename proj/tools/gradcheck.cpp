#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "probloc/errors.hpp"
#include "probloc/losses.hpp"
#include "probloc/pnp_solver.hpp"
#include "probloc/random.hpp"
#include "probloc/synth.hpp"

namespace probloc::cli {

namespace {

constexpr double kStep = 1e-6;
constexpr double kSolverStep = 1e-4;

double central_diff(const std::function<double(double)>& f, double x) {
  return (f(x + kStep) - f(x - kStep)) / (2.0 * kStep);
}

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

class Tracker {
 public:
  Tracker(std::string name, double tol) {
    t_.name = std::move(name);
    t_.tolerance = tol;
  }
  void add(double err) {
    ++t_.samples;
    t_.max_rel_err = std::isfinite(err) ? std::max(t_.max_rel_err, err) : INFINITY;
  }
  void add(double analytic, double numeric) { add(rel_err(analytic, numeric)); }
  GradcheckTarget done() const { return t_; }

 private:
  GradcheckTarget t_;
};

void check_kl(std::vector<GradcheckTarget>& out, Rng& rng, int n) {
  using Fn = KlEval (*)(double, double, double);
  const std::pair<const char*, Fn> targets[] = {
      {"gaussian_kl", &gaussian_kl}, {"laplacian_kl", &laplacian_kl}, {"mixed_kl", &mixed_kl}};
  for (const auto& [name, fn] : targets) {
    Tracker t(name, kLossGradTolerance);
    for (int i = 0; i < n; ++i) {
      const double mu = rng.uniform(-3, 3);
      const double y = rng.uniform(-3, 3);
      const double ls = rng.uniform(-1, 1);
      const KlEval e = fn(mu, y, ls);
      t.add(e.d_mu, central_diff([&](double m) { return fn(m, y, ls).value; }, mu));
      t.add(e.d_log_sigma, central_diff([&](double s) { return fn(mu, y, s).value; }, ls));
    }
    out.push_back(t.done());
  }

  Tracker t("robust_kl", kLossGradTolerance);
  for (int i = 0; i < n; ++i) {
    const double mu = rng.uniform(-3, 3);
    const double y = rng.uniform(-3, 3);
    const double ls = rng.uniform(-1, 1);
    const WeightNormalizer norm{std::exp(rng.uniform(-1, 1)), 0.99};
    const KlEval e = robust_kl(mu, y, ls, norm);
    t.add(e.d_mu, central_diff([&](double m) { return robust_kl(m, y, ls, norm).value; }, mu));
    t.add(e.d_log_sigma,
          central_diff([&](double s) { return robust_kl(mu, y, s, norm).value; }, ls));
  }
  out.push_back(t.done());
}

void check_misc_losses(std::vector<GradcheckTarget>& out, Rng& rng, int n) {
  Tracker l1("smooth_l1", kLossGradTolerance);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(-3, 3);
    l1.add(smooth_l1(x).d_x, central_diff([](double v) { return smooth_l1(v).value; }, x));
  }
  out.push_back(l1.done());

  Tracker calib("calib_loss", kLossGradTolerance);
  for (int i = 0; i < n; ++i) {
    const Matrix4d a = Matrix4d::NullaryExpr([&] { return rng.uniform(-1, 1); });
    const Matrix4d cov = a * a.transpose() + 0.1 * Matrix4d::Identity();
    const Vector4d dp = Vector4d::NullaryExpr([&] { return rng.uniform(-1, 1); });
    const Vector4d k = Vector4d::NullaryExpr([&] { return rng.uniform(-0.5, 0.5); });
    const CalibLossEval e = calib_loss(dp, cov, k);
    for (int j = 0; j < 4; ++j) {
      calib.add(e.d_k[j], central_diff(
                              [&](double v) {
                                Vector4d kk = k;
                                kk[j] = v;
                                return calib_loss(dp, cov, kk).value;
                              },
                              k[j]));
    }
  }
  out.push_back(calib.done());

  Tracker bce("score_bce", kLossGradTolerance);
  for (int i = 0; i < n; ++i) {
    const double c = rng.uniform(0.05, 0.95);
    const double t = rng.uniform(0.0, 1.0);
    const BceEval e = score_bce(c, t);
    bce.add(e.d_pred, central_diff([&](double v) { return score_bce(v, t).value; }, c));
    bce.add(e.d_target, central_diff([&](double v) { return score_bce(c, v).value; }, t));
  }
  out.push_back(bce.done());

  Tracker trans("l_trans", kLossGradTolerance);
  Tracker rot("l_rot", kLossGradTolerance);
  for (int i = 0; i < n; ++i) {
    const Pose gt{rng.uniform(-3, 3), {rng.uniform(-2, 2), 1.6, 20 + rng.uniform(-2, 2)}};
    const Pose est{gt.beta + rng.uniform(-1, 1),
                   gt.t + Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1),
                                          rng.uniform(-2, 2))};
    const E2eLossEval e = e2e_losses(est, gt);
    for (int j = 0; j < 4; ++j) {
      const auto eval = [&](double v, bool want_trans) {
        Vector4d p = est.as_vector();
        p[j] = v;
        const E2eLossEval r = e2e_losses(Pose::from_vector(p), gt);
        return want_trans ? r.trans : r.rot;
      };
      const double x = est.as_vector()[j];
      trans.add(e.d_trans[j], central_diff([&](double v) { return eval(v, true); }, x));
      rot.add(e.d_rot[j], central_diff([&](double v) { return eval(v, false); }, x));
    }
  }
  out.push_back(trans.done());
  out.push_back(rot.done());
}

Vector4d resolve(const CorrespondenceSet& cs, const Pose& start) {
  SolverConfig tight;
  tight.grad_tol = 1e-11;
  tight.max_iters = 200;
  return refine(cs, start, tight).pose.as_vector();
}

double column_error(const Vector4d& analytic, const Vector4d& numeric) {
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), 1e-12);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

void check_pnp(std::vector<GradcheckTarget>& out, const GradcheckConfig& cfg) {
  Tracker d_oc("pnp_backward_oc", kPnpGradTolerance);
  Tracker d_ls("pnp_backward_log_sigma", kPnpGradTolerance);
  SceneConfig scene_cfg;
  scene_cfg.n_objects = cfg.pnp_scenes;
  scene_cfg.pts_per_object = cfg.pnp_points;
  scene_cfg.seed = mix_seed(cfg.seed, 0x706e70);
  scene_cfg.noise.sigma_median_px = 2.0;
  for (const SceneObject& obj : generate(scene_cfg).objects) {
    const CorrespondenceSet& cs = obj.correspondences;
    const PoseDistribution d = solve(cs);
    const PnpGradients g = backward(cs, d.p_star);
    const double h = kSolverStep;
    for (std::size_t i = 0; i < cs.items.size(); ++i) {
      for (int axis = 0; axis < 3; ++axis) {
        CorrespondenceSet plus = cs;
        CorrespondenceSet minus = cs;
        plus.items[i].oc[axis] += h;
        minus.items[i].oc[axis] -= h;
        const Vector4d fd = (resolve(plus, d.p_star) - resolve(minus, d.p_star)) / (2 * h);
        d_oc.add(column_error(g.d_pstar_d_oc.col(3 * i + axis), fd));
      }
      for (int k = 0; k < 2; ++k) {
        CorrespondenceSet plus = cs;
        CorrespondenceSet minus = cs;
        plus.items[i].sigma[k] *= std::exp(h);
        minus.items[i].sigma[k] *= std::exp(-h);
        const Vector4d fd = (resolve(plus, d.p_star) - resolve(minus, d.p_star)) / (2 * h);
        d_ls.add(column_error(g.d_pstar_d_logsigma.col(2 * i + k), fd));
      }
    }
  }
  out.push_back(d_oc.done());
  out.push_back(d_ls.done());
}

}  // namespace

std::vector<GradcheckTarget> run_gradcheck(const GradcheckConfig& cfg) {
  if (cfg.loss_samples < 1 || cfg.pnp_scenes < 1 || cfg.pnp_points < 6) {
    throw Error(ErrorCode::kInvalidArgument,
                "gradcheck needs >= 1 loss sample, >= 1 scene and >= 6 points per scene");
  }
  std::vector<GradcheckTarget> out;
  Rng rng(cfg.seed);
  check_kl(out, rng, cfg.loss_samples);
  check_misc_losses(out, rng, cfg.loss_samples);
  check_pnp(out, cfg);
  return out;
}

void print_gradcheck(std::ostream& os, const std::vector<GradcheckTarget>& targets) {
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %8s %12s %10s  %s\n", "target", "samples",
                "max_rel_err", "tolerance", "result");
  os << line;
  for (const GradcheckTarget& t : targets) {
    std::snprintf(line, sizeof line, "%-24s %8zu %12.3e %10.1e  %s\n", t.name.c_str(),
                  t.samples, t.max_rel_err, t.tolerance, t.pass() ? "PASS" : "FAIL");
    os << line;
  }
}

}  // namespace probloc::cli
