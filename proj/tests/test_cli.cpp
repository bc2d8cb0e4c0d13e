#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "commands.hpp"
#include "csv.hpp"
#include "metrics.hpp"
#include "probloc/format.hpp"
#include "scene_io.hpp"

namespace probloc::cli {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("probloc_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string render(std::span<const MetricsRow> rows) {
  std::ostringstream os;
  write_metrics(os, rows);
  return os.str();
}

Scene make_scene(int objects, std::uint64_t seed, const NoiseModel& noise = {}) {
  SynthOptions opt;
  opt.objects = objects;
  opt.noise = noise;
  return generate(make_scene_config(opt, seed));
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PROBLOC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Csv, RoundTripsQuotedFields) {
  const std::vector<std::string> a = {"plain", "with,comma", "with \"quote\"", "multi\r\nline", ""};
  const std::vector<std::string> b = {"1", "2", "3", "4", "5"};
  std::ostringstream os;
  write_csv_record(os, a);
  write_csv_record(os, b);
  EXPECT_EQ(os.str(),
            "plain,\"with,comma\",\"with \"\"quote\"\"\",\"multi\r\nline\",\r\n1,2,3,4,5\r\n");
  std::istringstream is(os.str());
  const CsvTable t = read_csv(is);
  EXPECT_EQ(t.header, a);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0], b);
  EXPECT_EQ(t.column("with,comma"), 1u);
}

TEST(Csv, RejectsMalformedInput) {
  for (const char* text : {"a,b\r\n1\r\n", "a,b\r\n\"1,2\r\n", "a\r\n\"x\"y\r\n", ""}) {
    std::istringstream is(text);
    EXPECT_THROW(read_csv(is), Error) << text;
  }
  std::istringstream lf("a,b\n1,2\n");
  EXPECT_EQ(read_csv(lf).rows.size(), 1u);
  std::istringstream no_newline("a,b\r\n1,2");
  EXPECT_EQ(read_csv(no_newline).rows.at(0).at(1), "2");
  EXPECT_THROW(parse_double("1.5x", "c"), Error);
  EXPECT_EQ(parse_double("-2.5e-3", "c"), -2.5e-3);
}

TEST(Metrics, FixedVersionedHeader) {
  std::string joined;
  for (const auto& c : metrics_header(true)) joined += c + ",";
  EXPECT_EQ(joined,
            "schema_version,id,status,l_m,h_m,w_m,gt_beta_rad,gt_tx_m,gt_ty_m,gt_tz_m,beta_rad,"
            "tx_m,ty_m,tz_m,trans_err_m,yaw_err_rad,nll,converged,hessian_conditioned,cov_00,"
            "cov_01,cov_02,cov_03,cov_11,cov_12,cov_13,cov_22,cov_23,cov_33,c_2d,c_3dloc,c_3d,");
  EXPECT_EQ(metrics_header(false).size(), 29u);
}

TEST(Metrics, RoundTripIsByteIdentical) {
  const auto rows = solve_scene(make_scene(30, 5), {}, 1);
  const std::string first = render(rows);
  std::istringstream is(first);
  const MetricsTable t = read_metrics(is);
  EXPECT_EQ(render(t.rows), first);
  EXPECT_EQ(t.rows[4].cov, rows[4].cov);

  MetricsTable scored_in;
  scored_in.rows = rows;
  const auto scored = score_rows(scored_in, {}, 3, 1);
  const std::string scored_text = render(scored);
  std::istringstream is2(scored_text);
  EXPECT_EQ(render(read_metrics(is2).rows), scored_text);
}

TEST(Metrics, SchemaAndColumnErrors) {
  const std::string text = render(solve_scene(make_scene(3, 6), {}, 1));
  std::string bumped = text;
  for (std::size_t pos = bumped.find("\r\n1,"); pos != std::string::npos;
       pos = bumped.find("\r\n1,", pos + 1)) {
    bumped[pos + 2] = '2';
  }
  std::istringstream is(bumped);
  try {
    read_metrics(is);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaMismatch);
  }
  std::string dropped = text;
  const std::size_t pos = dropped.find("cov_23");
  dropped.replace(pos, 6, "cov_xx");
  std::istringstream is2(dropped);
  try {
    read_metrics(is2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingColumn);
  }
}

TEST(SceneIo, RoundTripIsByteIdentical) {
  NoiseModel noise;
  noise.outlier_frac = 0.2;
  noise.declared = DeclaredSigmaMode::kInflated;
  noise.declared_param = 0.5;
  const Scene scene = make_scene(10, 8, noise);
  std::ostringstream a;
  write_scene(a, scene);
  std::istringstream is(a.str());
  const Scene back = read_scene(is);
  std::ostringstream b;
  write_scene(b, back);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(back.config.noise.declared, DeclaredSigmaMode::kInflated);
  EXPECT_EQ(back.objects[3].correspondences.items[7].uv_obs,
            scene.objects[3].correspondences.items[7].uv_obs);
  EXPECT_EQ(back.objects[3].outlier, scene.objects[3].outlier);
  EXPECT_NE(a.str().find("\"schema_version\": 1"), std::string::npos);
}

TEST(SceneIo, RejectsForeignOrMalformedDocuments) {
  std::ostringstream a;
  write_scene(a, make_scene(1, 9));
  std::string text = a.str();
  text.replace(text.find("\"schema_version\": 1"), 19, "\"schema_version\": 7");
  std::istringstream is(text);
  try {
    read_scene(is);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaMismatch);
  }
  std::istringstream broken("{\"schema_version\": 1, \"objects\": [");
  EXPECT_THROW(read_scene(broken), Error);
  std::istringstream missing("{\"schema_version\": 1}");
  EXPECT_THROW(read_scene(missing), Error);
}

TEST(CalibrationIo, RoundTrip) {
  CalibrationFit fit;
  fit.k.k << 0.1, -0.2, 0.3, std::log(2.0);
  fit.loss_trace = {3.0, 2.5, 2.25};
  std::ostringstream os;
  write_calibration(os, fit);
  std::istringstream is(os.str());
  EXPECT_EQ(read_calibration(is).k, fit.k.k);
  EXPECT_NE(os.str().find("loss_trace"), std::string::npos);
}

TEST(Synth, WritesRequestedObjectsDeterministically) {
  TempDir dir;
  CommonOptions common{.seed = 7, .workers = 1, .output = dir.file("a.json")};
  SynthOptions opt;
  opt.objects = 100;
  opt.pts = 40;
  std::ostringstream log;
  EXPECT_EQ(cmd_synth(common, opt, log), kExitOk);
  EXPECT_NE(log.str().find("seed=7"), std::string::npos);
  std::istringstream is(read_file(common.output));
  EXPECT_EQ(read_scene(is).objects.size(), 100u);
  const std::string first = read_file(common.output);
  common.output = dir.file("b.json");
  cmd_synth(common, opt, log);
  EXPECT_EQ(read_file(common.output), first);
}

TEST(Synth, RejectsTooFewPoints) {
  TempDir dir;
  SynthOptions opt;
  opt.pts = 2;
  std::ostringstream log;
  try {
    cmd_synth({.output = dir.file("x.json")}, opt, log);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    EXPECT_EQ(exit_code_for(e.code()), kExitValidation);
  }
  EXPECT_FALSE(fs::exists(dir.file("x.json")));
}

TEST(Solve, NoiselessSceneRecoversExactly) {
  const auto rows = solve_scene(make_scene(50, 11, NoiseModel::noiseless()), {}, 1);
  const SolveSummary s = summarize(rows);
  EXPECT_LT(s.median_trans_err_m, 1e-6);
  EXPECT_EQ(s.solved, 50u);
}

TEST(Solve, ExactSigmaBeatsUniformOnContaminatedScenes) {
  NoiseModel noise;
  noise.outlier_frac = 0.3;
  const Scene scene = make_scene(100, 12, noise);
  const SolveSummary exact = summarize(solve_scene(scene, {}, 1));
  SolveOptions uniform;
  uniform.declared = DeclaredSigmaMode::kUniform;
  uniform.declared_param = 1.0;
  const SolveSummary unif = summarize(solve_scene(scene, uniform, 1));
  EXPECT_LT(exact.median_trans_err_m, unif.median_trans_err_m);
}

TEST(Solve, ConvergenceBookkeepingAndInRowFailures) {
  Scene scene = make_scene(6, 13);
  scene.objects[2].correspondences.items.resize(2);
  scene.objects[2].outlier.resize(2);
  scene.objects[2].sigma_true.resize(2);
  const auto rows = solve_scene(scene, {}, 1);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[2].status, "too_few_points");
  EXPECT_TRUE(rows[3].ok());
  const SolveSummary s = summarize(rows);
  const auto converged = std::count_if(rows.begin(), rows.end(),
                                       [](const auto& r) { return r.ok() && r.converged; });
  EXPECT_EQ(s.converged, static_cast<std::size_t>(converged));
  EXPECT_DOUBLE_EQ(s.convergence_rate, static_cast<double>(converged) / 6.0);
  const std::string text = render(rows);
  std::istringstream is(text);
  const auto back = read_metrics(is);
  EXPECT_EQ(back.rows[2].status, "too_few_points");
  EXPECT_EQ(render(back.rows), text);
}

TEST(Solve, OutputIndependentOfWorkerCount) {
  const Scene scene = make_scene(40, 14);
  EXPECT_EQ(render(solve_scene(scene, {}, 1)), render(solve_scene(scene, {}, 4)));
}

TEST(Calibrate, EmptyInputIsInsufficient) {
  try {
    calibrate_rows({}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientPairs);
  }
}

TEST(Calibrate, RecoversFourfoldInflation) {
  // Declared sigma at half the realized noise makes every raw covariance a
  // quarter of the truth.
  NoiseModel noise;
  noise.declared = DeclaredSigmaMode::kInflated;
  noise.declared_param = 0.5;
  const auto rows = solve_scene(make_scene(3000, 15, noise), {}, 1);
  const CalibrationOutcome out = calibrate_rows(rows, {});
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out.fit.k.scale()[i], 2.0, 0.1) << i;
}

TEST(Calibrate, WritesCalibrationAndReliabilityFiles) {
  TempDir dir;
  const auto rows = solve_scene(make_scene(200, 16), {}, 1);
  write_file(dir.file("m.csv"), render(rows));
  std::ostringstream log;
  EXPECT_EQ(cmd_calibrate({.output = dir.file("c.json")}, dir.file("m.csv"), dir.file("r.csv"),
                          {}, log),
            kExitOk);
  std::istringstream is(read_file(dir.file("c.json")));
  EXPECT_TRUE(read_calibration(is).k.allFinite());
  std::istringstream rel(read_file(dir.file("r.csv")));
  const CsvTable t = read_csv(rel);
  EXPECT_EQ(t.header, (std::vector<std::string>{"z_lo", "z_hi", "n", "H_pred", "H_actual"}));
  EXPECT_EQ(t.rows.size(), 7u);
}

TEST(Score, NearZeroCovarianceScoresOne) {
  MetricsTable t;
  t.rows = solve_scene(make_scene(5, 17), {}, 1);
  for (auto& r : t.rows) r.cov = Matrix4d::Identity() * 1e-14;
  for (const auto& r : score_rows(t, {}, 1, 1)) EXPECT_NEAR(r.score->c_3dloc, 1.0, 1e-6);
}

TEST(Score, DecreasesWithCovarianceTrace) {
  MetricsTable t;
  t.rows = solve_scene(make_scene(300, 18), {}, 1);
  const auto scored = score_rows(t, {}, 4, 1);
  std::vector<double> trace;
  std::vector<double> score;
  for (const auto& r : scored) {
    trace.push_back(r.cov.trace());
    score.push_back(r.score->c_3dloc);
  }
  const double rho = pearson(ranks(trace), ranks(score));
  const double z = rho * std::sqrt(static_cast<double>(trace.size()) - 1.0);
  const double p = std::erfc(std::abs(z) / std::sqrt(2.0));
  EXPECT_LT(rho, 0.0);
  EXPECT_LT(p, 0.01);
}

TEST(Score, DeterministicAndComposesConstantC2d) {
  MetricsTable t;
  t.rows = solve_scene(make_scene(30, 19), {}, 1);
  ScoreOptions opt;
  opt.c_2d = 0.5;
  const auto a = score_rows(t, opt, 21, 1);
  const auto b = score_rows(t, opt, 21, 3);
  EXPECT_EQ(render(a), render(b));
  for (const auto& r : a) EXPECT_DOUBLE_EQ(r.score->c_3d, 0.5 * r.score->c_3dloc);
  EXPECT_NE(render(score_rows(t, opt, 22, 1)), render(a));
}

TEST(Score, UsesC2dColumnWhenPresent) {
  MetricsTable t;
  t.rows = solve_scene(make_scene(4, 20), {}, 1);
  t.c_2d = std::vector<double>{0.1, 0.2, 0.3, 0.4};
  const auto rows = score_rows(t, {}, 1, 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_DOUBLE_EQ(rows[i].score->c_2d, (*t.c_2d)[i]);
  }
}

TEST(Gradcheck, AllTargetsPassAcrossSeeds) {
  for (const std::uint64_t seed : {1u, 2u}) {
    const auto targets = run_gradcheck({.seed = seed, .loss_samples = 1000, .pnp_scenes = 2});
    ASSERT_EQ(targets.size(), 11u);
    for (const auto& t : targets) {
      EXPECT_TRUE(t.pass()) << t.name << " " << t.max_rel_err;
      EXPECT_GE(t.samples, t.name.rfind("pnp", 0) == 0 ? 40u : 1000u) << t.name;
    }
  }
  std::ostringstream os;
  print_gradcheck(os, run_gradcheck({.loss_samples = 10, .pnp_scenes = 1}));
  EXPECT_NE(os.str().find("samples"), std::string::npos);
  EXPECT_NE(os.str().find("pnp_backward_oc"), std::string::npos);
  GradcheckTarget failing{"x", 10, 1e-3, 1e-5};
  EXPECT_FALSE(failing.pass());
}

TEST(Binary, ExitCodes) {
  TempDir dir;
  EXPECT_EQ(run_cli("synth --objects 3 --seed 1 -o " + dir.file("s.json")), 0);
  EXPECT_EQ(run_cli("synth --pts 2 -o " + dir.file("x.json")), 1);
  EXPECT_EQ(run_cli("synth --bogus-flag -o " + dir.file("x.json")), 1);
  EXPECT_EQ(run_cli("solve -i " + dir.file("missing.json") + " -o " + dir.file("m.csv")), 2);
  EXPECT_EQ(run_cli("solve -i " + dir.file("s.json") + " -o " + dir.file("m.csv")), 0);
  EXPECT_EQ(run_cli("calibrate -i " + dir.file("m.csv") + " -o " + dir.file("c.json")), 1);
  EXPECT_EQ(run_cli("score -i " + dir.file("m.csv") + " -o " + dir.file("sc.csv")), 0);
  EXPECT_EQ(run_cli("gradcheck --samples 50 --pnp-scenes 1"), 0);
  EXPECT_EQ(run_cli("solve -i " + dir.file("s.json") + " -o " + dir.file("no/such/dir.csv")),
            2);
}

}  // namespace
}  // namespace probloc::cli
