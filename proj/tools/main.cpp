#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using namespace probloc;
using namespace probloc::cli;

void add_common(CLI::App& app, CommonOptions& common, bool output_required) {
  app.add_option("--seed", common.seed, "PRNG seed")->capture_default_str();
  app.add_option("--workers", common.workers, "Worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  auto* out = app.add_option("-o,--output", common.output, "Output path");
  if (output_required) out->required();
}

const std::map<std::string, DeclaredSigmaMode> kModes = {
    {"exact", DeclaredSigmaMode::kExact},
    {"inflated", DeclaredSigmaMode::kInflated},
    {"uniform", DeclaredSigmaMode::kUniform}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic object localization: synthetic scenes, uncertainty-weighted PnP, "
               "covariance calibration and Monte-Carlo scoring"};
  app.require_subcommand(1);
  CommonOptions common;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene file (JSON)");
  SynthOptions synth_opt;
  std::string synth_declared = "exact";
  add_common(*synth, common, true);
  synth->add_option("--objects", synth_opt.objects, "Object count")->capture_default_str();
  synth->add_option("--pts", synth_opt.pts, "Correspondences per object (>= 3)")
      ->capture_default_str();
  synth->add_option("--sigma-px", synth_opt.noise.sigma_median_px,
                    "Median inlier pixel noise std")
      ->capture_default_str();
  synth->add_option("--sigma-log-std", synth_opt.noise.sigma_log_std,
                    "Std of log noise std across points")
      ->capture_default_str();
  synth->add_option("--outlier-frac", synth_opt.noise.outlier_frac,
                    "Fraction of contaminated points")
      ->capture_default_str();
  synth->add_option("--outlier-sigma", synth_opt.noise.outlier_sigma_px,
                    "Pixel noise std of contaminated points")
      ->capture_default_str();
  synth->add_option("--declared", synth_declared, "Declared sigma mode")
      ->check(CLI::IsMember({"exact", "inflated", "uniform"}))
      ->capture_default_str();
  synth->add_option("--declared-param", synth_opt.noise.declared_param,
                    "Inflation factor or uniform sigma")
      ->capture_default_str();
  synth->add_option("--z-min", synth_opt.z_min, "Nearest object depth (m)")
      ->capture_default_str();
  synth->add_option("--z-max", synth_opt.z_max, "Farthest object depth (m)")
      ->capture_default_str();

  auto* solve = app.add_subcommand("solve", "Solve every object of a scene into metrics CSV");
  SolveOptions solve_opt;
  std::string scene_path;
  std::string solve_declared;
  add_common(*solve, common, true);
  solve->add_option("-i,--input", scene_path, "Scene JSON")->required();
  solve->add_option("--declared", solve_declared, "Re-declare sigmas before solving")
      ->check(CLI::IsMember({"exact", "inflated", "uniform"}));
  solve->add_option("--declared-param", solve_opt.declared_param,
                    "Inflation factor or uniform sigma")
      ->capture_default_str();
  solve->add_flag("--clean-only", solve_opt.clean_only, "Drop contaminated points");
  solve->add_option("--max-iters", solve_opt.solver.max_iters, "LM iterations per start")
      ->capture_default_str();
  solve->add_option("--grad-tol", solve_opt.solver.grad_tol, "Gradient-norm tolerance")
      ->capture_default_str();

  auto* calibrate = app.add_subcommand(
      "calibrate", "Fit the covariance calibration vector and write reliability bins");
  CalibrateOptions calib_opt;
  std::string calib_input;
  std::string reliability_out;
  add_common(*calibrate, common, true);
  calibrate->add_option("-i,--input", calib_input, "Metrics CSV from solve")->required();
  calibrate->add_option("--reliability-out", reliability_out, "Reliability CSV path");
  calibrate->add_option("--steps", calib_opt.fit.steps, "Gradient steps")
      ->capture_default_str();
  calibrate->add_option("--lr", calib_opt.fit.learning_rate, "Learning rate")
      ->capture_default_str();
  calibrate->add_option("--cov-scale", calib_opt.cov_scale,
                        "Extra scale on covariances in the reliability report")
      ->capture_default_str();
  calibrate->add_option("--min-count", calib_opt.min_count, "Minimum records per bin")
      ->capture_default_str();

  auto* score = app.add_subcommand("score", "Attach Monte-Carlo localization scores");
  ScoreOptions score_opt;
  std::string score_input;
  std::string calibration_path;
  add_common(*score, common, true);
  score->add_option("-i,--input", score_input, "Metrics CSV from solve")->required();
  score->add_option("--calibration", calibration_path, "Calibration JSON to apply");
  score->add_option("--c2d", score_opt.c_2d, "Constant 2D score when no c_2d column")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  score->add_option("--samples", score_opt.samples, "Monte-Carlo samples per object")
      ->capture_default_str();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient self-check");
  GradcheckConfig grad_cfg;
  add_common(*gradcheck, common, false);
  gradcheck->add_option("--samples", grad_cfg.loss_samples, "Random inputs per loss")
      ->capture_default_str();
  gradcheck->add_option("--pnp-scenes", grad_cfg.pnp_scenes, "Scenes for PnP backward")
      ->capture_default_str();
  gradcheck->add_option("--pnp-points", grad_cfg.pnp_points, "Points per PnP scene")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (synth->parsed()) {
      synth_opt.noise.declared = kModes.at(synth_declared);
      return cmd_synth(common, synth_opt, std::cout);
    }
    if (solve->parsed()) {
      if (!solve_declared.empty()) solve_opt.declared = kModes.at(solve_declared);
      return cmd_solve(common, scene_path, solve_opt, std::cout);
    }
    if (calibrate->parsed()) {
      return cmd_calibrate(common, calib_input, reliability_out, calib_opt, std::cout);
    }
    if (score->parsed()) {
      return cmd_score(common, score_input, calibration_path, score_opt, std::cout);
    }
    if (gradcheck->parsed()) return cmd_gradcheck(common, grad_cfg, std::cout);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
  return kExitValidation;
}
