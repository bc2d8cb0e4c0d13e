#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "probloc/calibration.hpp"
#include "probloc/errors.hpp"
#include "probloc/losses.hpp"

namespace probloc {
namespace {

Matrix4d random_spd(std::mt19937_64& gen) {
  std::normal_distribution<double> n01;
  Matrix4d a;
  for (int i = 0; i < 16; ++i) a(i) = n01(gen);
  Matrix4d s = a * a.transpose() / 4.0 + 0.05 * Matrix4d::Identity();
  // Pose-like scales: small yaw variance, larger depth variance.
  const Vector4d scale(0.05, 0.3, 0.1, 0.6);
  return scale.asDiagonal() * s * scale.asDiagonal();
}

// Pairs whose errors are drawn from N(0, factor * raw_cov).
std::vector<CalibrationPair> inflated_pairs(int n, double factor, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  std::vector<CalibrationPair> pairs;
  for (int i = 0; i < n; ++i) {
    CalibrationPair p;
    p.raw_cov = random_spd(gen);
    const Matrix4d l = p.raw_cov.llt().matrixL();
    const Vector4d z(n01(gen), n01(gen), n01(gen), n01(gen));
    const Vector4d err = std::sqrt(factor) * (l * z);
    p.p_gt = Pose{0.3, {1.0, 1.6, 20.0}};
    p.p_star = Pose::from_vector(p.p_gt.as_vector() + err);
    pairs.push_back(p);
  }
  return pairs;
}

TEST(CalibratedCov, Examples) {
  std::mt19937_64 gen(61);
  const Matrix4d raw = random_spd(gen);
  EXPECT_TRUE(calibrated_cov(raw, {}).isApprox(raw, 1e-15));
  CalibrationVector all;
  all.k.setConstant(std::log(2.0));
  EXPECT_TRUE(calibrated_cov(raw, all).isApprox(4.0 * raw, 1e-14));
  CalibrationVector one;
  one.k << 0.0, std::log(2.0), 0.0, 0.0;
  const Matrix4d c = calibrated_cov(raw, one);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const double f = (i == 1 ? 2.0 : 1.0) * (j == 1 ? 2.0 : 1.0);
      EXPECT_NEAR(c(i, j), f * raw(i, j), 1e-14);
    }
  }
}

TEST(CalibratedCov, PreservesSymmetryAndPsd) {
  std::mt19937_64 gen(62);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Matrix4d raw = random_spd(gen);
    CalibrationVector k;
    k.k << u(gen), u(gen), u(gen), u(gen);
    const Matrix4d c = calibrated_cov(raw, k);
    EXPECT_TRUE(c.isApprox(c.transpose(), 1e-14));
    Eigen::SelfAdjointEigenSolver<Matrix4d> es(c);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(FitCalibration, RecoversKnownInflation) {
  const auto pairs = inflated_pairs(20000, 4.0, 63);
  const CalibrationFit fit = fit_calibration(pairs);
  EXPECT_EQ(fit.loss_trace.size(), 501u);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(fit.k.scale()[i], 2.0, 0.1) << i;
  for (std::size_t s = 11; s < fit.loss_trace.size(); ++s) {
    EXPECT_LE(fit.loss_trace[s], fit.loss_trace[s - 1] + 1e-12);
  }
  EXPECT_NEAR(mean_mahalanobis(pairs, fit.k), 4.0, 0.4);
}

TEST(FitCalibration, AlreadyCalibratedFixedPoint) {
  const auto pairs = inflated_pairs(20000, 1.0, 64);
  const CalibrationFit fit = fit_calibration(pairs);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(fit.k.k[i], 0.0, 0.05);
  EXPECT_NEAR(mean_mahalanobis(pairs, fit.k), 4.0, 0.4);
}

TEST(FitCalibration, MatchesMeanLossGradient) {
  // Independent check: descent direction equals the mean of the per-pair
  // analytic calib_loss gradients.
  const auto pairs = inflated_pairs(50, 3.0, 65);
  const FitConfig one_step{.steps = 1, .learning_rate = 0.1, .preconditioned = false};
  const CalibrationFit fit = fit_calibration(pairs, {}, one_step);
  Vector4d grad = Vector4d::Zero();
  for (const auto& p : pairs) grad += calib_loss(p.p_star, p.p_gt, p.raw_cov).d_k;
  grad /= static_cast<double>(pairs.size());
  EXPECT_TRUE(fit.k.k.isApprox(-0.1 * grad, 1e-12));
}

// Pose-like covariances whose tx and tz are correlated almost perfectly, as
// they are for a point cloud seen along the viewing ray.
std::vector<CalibrationPair> ray_correlated_pairs(int n, double factor, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> rho(0.98, 0.9995);
  std::vector<CalibrationPair> pairs;
  for (int i = 0; i < n; ++i) {
    const double r = rho(gen);
    Matrix4d corr = Matrix4d::Identity();
    corr(1, 3) = corr(3, 1) = r;
    const Vector4d sd(0.01, 0.05, 0.01, 0.5);
    CalibrationPair p;
    p.raw_cov = sd.asDiagonal() * corr * sd.asDiagonal();
    const Matrix4d l = p.raw_cov.llt().matrixL();
    const Vector4d z(n01(gen), n01(gen), n01(gen), n01(gen));
    p.p_gt = Pose{0.1, {2.0, 1.6, 30.0}};
    p.p_star = Pose::from_vector(p.p_gt.as_vector() + std::sqrt(factor) * (l * z));
    pairs.push_back(p);
  }
  return pairs;
}

TEST(FitCalibration, PreconditionerIsExpectedHessian) {
  // Central second differences of the mean loss on well-specified data.
  const auto pairs = ray_correlated_pairs(20000, 1.0, 68);
  const auto mean_loss = [&](const Vector4d& k) {
    double sum = 0.0;
    for (const auto& p : pairs) sum += calib_loss(p.p_star, p.p_gt, p.raw_cov, k).value;
    return sum / static_cast<double>(pairs.size());
  };
  const double h = 1e-3;
  Matrix4d hess;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const Vector4d ei = h * Vector4d::Unit(i);
      const Vector4d ej = h * Vector4d::Unit(j);
      hess(i, j) = (mean_loss(ei + ej) - mean_loss(ei - ej) - mean_loss(-ei + ej) +
                    mean_loss(-ei - ej)) /
                   (4 * h * h);
    }
  }
  Matrix4d fisher = Matrix4d::Identity();
  for (const auto& p : pairs) {
    fisher += p.raw_cov.inverse().cwiseProduct(p.raw_cov) / static_cast<double>(pairs.size());
  }
  EXPECT_LT((hess - fisher).norm() / fisher.norm(), 0.05);

  const FitConfig one_step{.steps = 1, .learning_rate = 0.1};
  const auto fit = fit_calibration(std::span(pairs).first(100), {}, one_step);
  Matrix4d f100 = Matrix4d::Identity();
  Vector4d g100 = Vector4d::Zero();
  for (std::size_t i = 0; i < 100; ++i) {
    f100 += pairs[i].raw_cov.inverse().cwiseProduct(pairs[i].raw_cov) / 100.0;
    g100 += calib_loss(pairs[i].p_star, pairs[i].p_gt, pairs[i].raw_cov).d_k / 100.0;
  }
  EXPECT_TRUE(fit.k.k.isApprox(-0.1 * f100.ldlt().solve(g100), 1e-10));
}

TEST(FitCalibration, RecoversInflationUnderRayCorrelation) {
  const auto pairs = ray_correlated_pairs(20000, 4.0, 69);
  const CalibrationFit fit = fit_calibration(pairs);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(fit.k.scale()[i], 2.0, 0.1) << i;
  for (std::size_t s = 11; s < fit.loss_trace.size(); ++s) {
    EXPECT_LE(fit.loss_trace[s], fit.loss_trace[s - 1] + 1e-12);
  }
  // Unpreconditioned steps at the same rate blow up on this data.
  const CalibrationFit plain = fit_calibration(pairs, {}, {.preconditioned = false});
  EXPECT_FALSE(plain.loss_trace.back() < fit.loss_trace.back() + 1.0);
}

TEST(FitCalibration, OrderInvariant) {
  auto pairs = inflated_pairs(200, 2.0, 66);
  const FitConfig cfg{.steps = 100};
  const auto a = fit_calibration(pairs, {}, cfg);
  std::reverse(pairs.begin(), pairs.end());
  const auto b = fit_calibration(pairs, {}, cfg);
  EXPECT_TRUE(a.k.k.isApprox(b.k.k, 1e-12));
}

TEST(FitCalibration, Errors) {
  auto pairs = inflated_pairs(9, 1.0, 67);
  try {
    fit_calibration(pairs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientPairs);
  }
  pairs = inflated_pairs(12, 1.0, 67);
  pairs[3].raw_cov.row(2).setZero();
  pairs[3].raw_cov.col(2).setZero();
  try {
    fit_calibration(pairs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateData);
  }
}

std::vector<ReliabilityRecord> sampled_records(int per_bin, double actual_scale,
                                               std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> within(0.0, 10.0);
  std::vector<ReliabilityRecord> out;
  for (int b = 0; b < 7; ++b) {
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    cov.diagonal() << 0.01 * (b + 1), 0.004 * (b + 1), 0.05 * (b + 1) * (b + 1);
    cov(0, 2) = cov(2, 0) = 0.3 * std::sqrt(cov(0, 0) * cov(2, 2));
    const Eigen::Matrix3d l = (actual_scale * cov).llt().matrixL();
    for (int i = 0; i < per_bin; ++i) {
      ReliabilityRecord r;
      r.t_gt = {0.0, 1.6, 10.0 * b + within(gen)};
      r.cov_t = cov;
      r.t_star = r.t_gt + l * Eigen::Vector3d(n01(gen), n01(gen), n01(gen));
      out.push_back(r);
    }
  }
  return out;
}

TEST(Reliability, IdentityEntropy) {
  EXPECT_NEAR(gaussian_entropy(Eigen::Matrix3d::Identity()),
              1.5 * std::log(2.0 * std::numbers::pi * std::numbers::e), 1e-12);
  EXPECT_NEAR(gaussian_entropy(Eigen::Matrix3d::Identity()), 4.25681, 1e-5);
}

TEST(Reliability, SelfConsistentSampling) {
  const auto records = sampled_records(10000, 1.0, 71);
  const auto edges = default_bin_edges();
  const auto report = reliability(records, edges);
  ASSERT_EQ(report.bins.size(), 7u);
  for (const auto& bin : report.bins) {
    EXPECT_EQ(bin.n, 10000u);
    EXPECT_FALSE(bin.sparse);
    EXPECT_LT(std::abs(bin.h_pred - bin.h_actual), 0.1);
  }
}

TEST(Reliability, ScaledPredictionGap) {
  const auto records = sampled_records(10000, 0.25, 72);
  const auto edges = default_bin_edges();
  for (const auto& bin : reliability(records, edges).bins) {
    EXPECT_NEAR(bin.h_pred - bin.h_actual, 1.5 * std::log(4.0), 0.1);
  }
  // A user scale of 1/4 closes the gap.
  for (const auto& bin : reliability(records, edges, kReliabilityMinCount, 0.25).bins) {
    EXPECT_LT(std::abs(bin.h_pred - bin.h_actual), 0.1);
  }
}

TEST(Reliability, SparseBinsAndOrdering) {
  auto records = sampled_records(40, 1.0, 73);
  records.erase(std::remove_if(records.begin(), records.end(),
                               [](const auto& r) { return r.t_gt.z() >= 60.0; }),
                records.end());
  records.resize(records.size() - 20);  // leave 20 in [50, 60)
  const auto edges = default_bin_edges();
  const auto report = reliability(records, edges);
  ASSERT_EQ(report.bins.size(), 7u);
  for (std::size_t i = 1; i < report.bins.size(); ++i) {
    EXPECT_LT(report.bins[i - 1].z_lo, report.bins[i].z_lo);
  }
  EXPECT_TRUE(report.bins[5].sparse);
  EXPECT_EQ(report.bins[5].n, 20u);
  EXPECT_TRUE(report.bins[6].sparse);
  EXPECT_FALSE(report.bins[0].sparse);
}

TEST(Reliability, CsvLayout) {
  const auto report = reliability(sampled_records(40, 1.0, 74), default_bin_edges());
  std::ostringstream os;
  report.write_csv(os);
  const std::string s = os.str();
  EXPECT_EQ(s.rfind("z_lo,z_hi,n,H_pred,H_actual\r\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 8);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\r'), 8);
}

}  // namespace
}  // namespace probloc
