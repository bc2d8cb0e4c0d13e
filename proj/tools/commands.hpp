#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "metrics.hpp"
#include "probloc/calibration.hpp"
#include "probloc/errors.hpp"
#include "probloc/pnp_solver.hpp"
#include "probloc/synth.hpp"

namespace probloc::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitIo = 2,
  kExitCheckFailure = 3,
};

int exit_code_for(ErrorCode code);

struct CommonOptions {
  std::uint64_t seed = 0;
  int workers = 1;
  std::string output;

  void validate() const;
};

struct SynthOptions {
  int objects = 100;
  int pts = 40;
  NoiseModel noise;
  double z_min = 5.0;
  double z_max = 65.0;
};

SceneConfig make_scene_config(const SynthOptions& opt, std::uint64_t seed);

struct SolveOptions {
  /// Re-declares sigmas before solving; empty keeps the scene's own.
  std::optional<DeclaredSigmaMode> declared;
  double declared_param = 1.0;
  /// Drop the points flagged as contaminated.
  bool clean_only = false;
  SolverConfig solver;
};

/// One row per object, ordered by object position in the scene regardless of
/// worker count. Per-object failures land in the status column.
std::vector<MetricsRow> solve_scene(const Scene& scene, const SolveOptions& opt,
                                    int workers);

struct SolveSummary {
  std::size_t objects = 0;
  std::size_t solved = 0;
  std::size_t converged = 0;
  double convergence_rate = 0.0;
  double median_trans_err_m = 0.0;
  double mean_trans_err_m = 0.0;
  double median_yaw_err_rad = 0.0;
  double mean_yaw_err_rad = 0.0;
};

SolveSummary summarize(std::span<const MetricsRow> rows);
void print_summary(std::ostream& os, const SolveSummary& s);

struct CalibrateOptions {
  FitConfig fit;
  /// User-supplied multiplier on every calibrated covariance in the
  /// reliability report.
  double cov_scale = 1.0;
  std::size_t min_count = kReliabilityMinCount;
};

struct CalibrationOutcome {
  CalibrationFit fit;
  ReliabilityReport report;
};

/// Fits k on the solved rows, then bins the calibrated translation blocks.
CalibrationOutcome calibrate_rows(std::span<const MetricsRow> rows,
                                  const CalibrateOptions& opt);

struct ScoreOptions {
  int samples = ScoringConfig{}.n_samples;
  /// Used when the input has no c_2d column.
  double c_2d = 1.0;
  std::optional<CalibrationVector> calibration;
};

/// Copies the table's rows and attaches a Monte-Carlo score to each; the
/// sampling stream of each object is derived from (seed, id).
std::vector<MetricsRow> score_rows(const MetricsTable& table, const ScoreOptions& opt,
                                   std::uint64_t seed, int workers);

/// File-level subcommands. Each returns an exit code and reports to `log`;
/// library errors propagate as probloc::Error.
int cmd_synth(const CommonOptions& common, const SynthOptions& opt, std::ostream& log);
int cmd_solve(const CommonOptions& common, const std::string& scene_path,
              const SolveOptions& opt, std::ostream& log);
int cmd_calibrate(const CommonOptions& common, const std::string& metrics_path,
                  const std::string& reliability_path, const CalibrateOptions& opt,
                  std::ostream& log);
int cmd_score(const CommonOptions& common, const std::string& metrics_path,
              const std::string& calibration_path, const ScoreOptions& opt,
              std::ostream& log);
int cmd_gradcheck(const CommonOptions& common, const GradcheckConfig& cfg, std::ostream& log);

}  // namespace probloc::cli
