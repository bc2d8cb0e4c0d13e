#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "probloc/format.hpp"
#include "probloc/random.hpp"
#include "probloc/scoring.hpp"
#include "scene_io.hpp"

namespace probloc::cli {

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// thrown by any task is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(workers, 1), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            const std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  return 0.5 * (*std::max_element(v.begin(), v.begin() + mid) + upper);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

MetricsRow solve_object(const SceneObject& obj, const SolveOptions& opt) {
  MetricsRow row;
  row.id = obj.id;
  row.dims = obj.gt_dims;
  row.gt = obj.gt_pose;
  CorrespondenceSet cs = opt.declared
                             ? redeclare(obj, *opt.declared, opt.declared_param)
                             : obj.correspondences;
  if (opt.clean_only) {
    CorrespondenceSet kept;
    kept.camera = cs.camera;
    for (std::size_t i = 0; i < cs.items.size(); ++i) {
      if (!obj.outlier[i]) kept.items.push_back(cs.items[i]);
    }
    cs = std::move(kept);
  }
  try {
    const PoseDistribution d = solve(cs, opt.solver);
    row.est = d.p_star;
    row.trans_err_m = (d.p_star.t - obj.gt_pose.t).norm();
    row.yaw_err_rad = std::abs(normalize_angle(d.p_star.beta - obj.gt_pose.beta));
    row.nll = d.nll;
    row.converged = d.converged;
    row.hessian_conditioned = d.hessian_conditioned;
    row.cov = d.cov;
  } catch (const Error& e) {
    row.status = to_string(e.code());
  }
  return row;
}

std::string render_metrics(std::span<const MetricsRow> rows) {
  std::ostringstream os;
  write_metrics(os, rows);
  return os.str();
}

MetricsTable load_metrics(const std::string& path) {
  std::istringstream is(read_file(path));
  return read_metrics(is);
}

}  // namespace

int exit_code_for(ErrorCode code) {
  return code == ErrorCode::kIo ? kExitIo : kExitValidation;
}

void CommonOptions::validate() const {
  if (workers < 1) throw Error(ErrorCode::kInvalidArgument, "--workers must be >= 1");
}

SceneConfig make_scene_config(const SynthOptions& opt, std::uint64_t seed) {
  SceneConfig cfg;
  cfg.n_objects = opt.objects;
  cfg.pts_per_object = opt.pts;
  cfg.noise = opt.noise;
  cfg.seed = seed;
  cfg.z_min = opt.z_min;
  cfg.z_max = opt.z_max;
  cfg.validate();
  return cfg;
}

std::vector<MetricsRow> solve_scene(const Scene& scene, const SolveOptions& opt,
                                    int workers) {
  opt.solver.validate();
  if (opt.declared_param <= 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "declared-sigma parameter must be positive");
  }
  std::vector<MetricsRow> rows(scene.objects.size());
  parallel_for(rows.size(), workers,
               [&](std::size_t i) { rows[i] = solve_object(scene.objects[i], opt); });
  return rows;
}

SolveSummary summarize(std::span<const MetricsRow> rows) {
  SolveSummary s;
  s.objects = rows.size();
  std::vector<double> trans;
  std::vector<double> yaw;
  for (const MetricsRow& r : rows) {
    if (!r.ok()) continue;
    ++s.solved;
    if (r.converged) ++s.converged;
    trans.push_back(r.trans_err_m);
    yaw.push_back(r.yaw_err_rad);
  }
  s.convergence_rate =
      s.objects == 0 ? 0.0 : static_cast<double>(s.converged) / static_cast<double>(s.objects);
  s.median_trans_err_m = median(trans);
  s.mean_trans_err_m = mean(trans);
  s.median_yaw_err_rad = median(yaw);
  s.mean_yaw_err_rad = mean(yaw);
  return s;
}

void print_summary(std::ostream& os, const SolveSummary& s) {
  os << "objects:             " << s.objects << '\n'
     << "solved:              " << s.solved << '\n'
     << "converged:           " << s.converged << '\n'
     << "convergence_rate:    " << format_number(s.convergence_rate) << '\n'
     << "median_trans_err_m:  " << format_number(s.median_trans_err_m) << '\n'
     << "mean_trans_err_m:    " << format_number(s.mean_trans_err_m) << '\n'
     << "median_yaw_err_rad:  " << format_number(s.median_yaw_err_rad) << '\n'
     << "mean_yaw_err_rad:    " << format_number(s.mean_yaw_err_rad) << '\n';
}

CalibrationOutcome calibrate_rows(std::span<const MetricsRow> rows,
                                  const CalibrateOptions& opt) {
  if (!(opt.cov_scale > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "covariance scale must be positive");
  }
  std::vector<CalibrationPair> pairs;
  for (const MetricsRow& r : rows) {
    if (r.ok()) pairs.push_back({r.est, r.gt, r.cov});
  }
  CalibrationOutcome out;
  out.fit = fit_calibration(pairs, {}, opt.fit);

  std::vector<ReliabilityRecord> records;
  for (const CalibrationPair& p : pairs) {
    ReliabilityRecord rec;
    rec.t_star = p.p_star.t;
    rec.t_gt = p.p_gt.t;
    rec.cov_t = calibrated_cov(p.raw_cov, out.fit.k).block<3, 3>(1, 1);
    records.push_back(rec);
  }
  const std::vector<double> edges = default_bin_edges();
  out.report = reliability(records, edges, opt.min_count, opt.cov_scale);
  return out;
}

std::vector<MetricsRow> score_rows(const MetricsTable& table, const ScoreOptions& opt,
                                   std::uint64_t seed, int workers) {
  if (opt.samples < 1) throw Error(ErrorCode::kInvalidArgument, "--samples must be >= 1");
  std::vector<MetricsRow> rows = table.rows;
  parallel_for(rows.size(), workers, [&](std::size_t i) {
    MetricsRow& r = rows[i];
    r.score.emplace();
    if (!r.ok()) return;
    const Matrix4d cov = opt.calibration ? calibrated_cov(r.cov, *opt.calibration) : r.cov;
    ScoringConfig cfg;
    cfg.n_samples = opt.samples;
    cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(r.id));
    const double c_2d = table.c_2d ? (*table.c_2d)[i] : opt.c_2d;
    const McScore s = mc_score(r.est, cov, r.dims, cfg);
    *r.score = compose_score(s.c_3dloc, c_2d);
  });
  return rows;
}

int cmd_synth(const CommonOptions& common, const SynthOptions& opt, std::ostream& log) {
  common.validate();
  const SceneConfig cfg = make_scene_config(opt, common.seed);
  const Scene scene = generate(cfg);
  std::ostringstream doc;
  write_scene(doc, scene);
  write_file(common.output, doc.str());
  log << "synth: wrote " << scene.objects.size() << " objects to " << common.output << '\n'
      << "  seed=" << cfg.seed << " pts_per_object=" << cfg.pts_per_object
      << " sigma_median_px=" << format_number(cfg.noise.sigma_median_px)
      << " sigma_log_std=" << format_number(cfg.noise.sigma_log_std)
      << " outlier_frac=" << format_number(cfg.noise.outlier_frac)
      << " outlier_sigma_px=" << format_number(cfg.noise.outlier_sigma_px)
      << " declared=" << to_string(cfg.noise.declared)
      << " declared_param=" << format_number(cfg.noise.declared_param)
      << " z_range=[" << format_number(cfg.z_min) << ", " << format_number(cfg.z_max)
      << "]\n";
  return kExitOk;
}

int cmd_solve(const CommonOptions& common, const std::string& scene_path,
              const SolveOptions& opt, std::ostream& log) {
  common.validate();
  std::istringstream is(read_file(scene_path));
  const Scene scene = read_scene(is);
  const std::vector<MetricsRow> rows = solve_scene(scene, opt, common.workers);
  write_file(common.output, render_metrics(rows));
  log << "solve: wrote " << rows.size() << " rows to " << common.output << '\n';
  print_summary(log, summarize(rows));
  return kExitOk;
}

int cmd_calibrate(const CommonOptions& common, const std::string& metrics_path,
                  const std::string& reliability_path, const CalibrateOptions& opt,
                  std::ostream& log) {
  common.validate();
  const MetricsTable table = load_metrics(metrics_path);
  const CalibrationOutcome out = calibrate_rows(table.rows, opt);
  std::ostringstream doc;
  write_calibration(doc, out.fit);
  write_file(common.output, doc.str());
  if (!reliability_path.empty()) {
    std::ostringstream csv;
    out.report.write_csv(csv);
    write_file(reliability_path, csv.str());
  }
  const Vector4d scale = out.fit.k.scale();
  log << "calibrate: wrote " << common.output << '\n'
      << "  exp(k) = [" << format_number(scale[0]) << ", " << format_number(scale[1]) << ", "
      << format_number(scale[2]) << ", " << format_number(scale[3]) << "]\n"
      << "  loss " << format_number(out.fit.loss_trace.front()) << " -> "
      << format_number(out.fit.loss_trace.back()) << '\n';
  for (const ReliabilityBin& b : out.report.bins) {
    log << "  z [" << format_number(b.z_lo) << ", " << format_number(b.z_hi) << ") n=" << b.n;
    if (b.sparse) {
      log << " sparse\n";
    } else {
      log << " H_pred=" << format_number(b.h_pred) << " H_actual=" << format_number(b.h_actual)
          << '\n';
    }
  }
  return kExitOk;
}

int cmd_score(const CommonOptions& common, const std::string& metrics_path,
              const std::string& calibration_path, const ScoreOptions& opt,
              std::ostream& log) {
  common.validate();
  MetricsTable table = load_metrics(metrics_path);
  ScoreOptions effective = opt;
  if (!calibration_path.empty()) {
    std::istringstream is(read_file(calibration_path));
    effective.calibration = read_calibration(is);
  }
  const std::vector<MetricsRow> rows = score_rows(table, effective, common.seed, common.workers);
  write_file(common.output, render_metrics(rows));
  std::vector<double> scores;
  for (const MetricsRow& r : rows) {
    if (r.ok()) scores.push_back(r.score->c_3d);
  }
  log << "score: wrote " << rows.size() << " rows to " << common.output << '\n'
      << "  scored=" << scores.size() << " median_c_3d=" << format_number(median(scores))
      << " mean_c_3d=" << format_number(mean(scores)) << '\n';
  return kExitOk;
}

int cmd_gradcheck(const CommonOptions& common, const GradcheckConfig& cfg, std::ostream& log) {
  common.validate();
  GradcheckConfig effective = cfg;
  effective.seed = common.seed;
  const std::vector<GradcheckTarget> targets = run_gradcheck(effective);
  std::ostringstream table;
  print_gradcheck(table, targets);
  log << table.str();
  if (!common.output.empty()) write_file(common.output, table.str());
  const bool ok = std::all_of(targets.begin(), targets.end(),
                              [](const GradcheckTarget& t) { return t.pass(); });
  return ok ? kExitOk : kExitCheckFailure;
}

}  // namespace probloc::cli
