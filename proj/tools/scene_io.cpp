#include "scene_io.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "probloc/errors.hpp"

namespace probloc::cli {

namespace {

using nlohmann::json;

json vec(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> read_vec(const json& j) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N)) {
    throw Error(ErrorCode::kInvalidArgument,
                "expected an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j.at(i).get<double>();
  return v;
}

json noise_to_json(const NoiseModel& n) {
  return {{"sigma_median_px", n.sigma_median_px},
          {"sigma_log_std", n.sigma_log_std},
          {"outlier_frac", n.outlier_frac},
          {"outlier_sigma_px", n.outlier_sigma_px},
          {"declared", to_string(n.declared)},
          {"declared_param", n.declared_param}};
}

NoiseModel noise_from_json(const json& j) {
  NoiseModel n;
  n.sigma_median_px = j.at("sigma_median_px").get<double>();
  n.sigma_log_std = j.at("sigma_log_std").get<double>();
  n.outlier_frac = j.at("outlier_frac").get<double>();
  n.outlier_sigma_px = j.at("outlier_sigma_px").get<double>();
  n.declared = parse_declared_mode(j.at("declared").get<std::string>());
  n.declared_param = j.at("declared_param").get<double>();
  return n;
}

json camera_to_json(const CameraIntrinsics& c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}};
}

CameraIntrinsics camera_from_json(const json& j) {
  return {j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
          j.at("cy").get<double>()};
}

json object_to_json(const SceneObject& obj) {
  json points = json::array();
  for (std::size_t k = 0; k < obj.correspondences.items.size(); ++k) {
    const Correspondence& c = obj.correspondences.items[k];
    points.push_back({{"noc", vec(obj.gt_noc[k].xyz)},
                      {"oc", vec(c.oc)},
                      {"uv", vec(c.uv_obs)},
                      {"sigma", vec(c.sigma)},
                      {"sigma_true", vec(obj.sigma_true[k])},
                      {"outlier", static_cast<bool>(obj.outlier[k])}});
  }
  return {{"id", obj.id},
          {"gt_pose", {{"beta", obj.gt_pose.beta}, {"t", vec(obj.gt_pose.t)}}},
          {"gt_dims", {{"l", obj.gt_dims.l}, {"h", obj.gt_dims.h}, {"w", obj.gt_dims.w}}},
          {"points", std::move(points)}};
}

SceneObject object_from_json(const json& j, const CameraIntrinsics& cam) {
  SceneObject obj;
  obj.id = j.at("id").get<int>();
  const json& pose = j.at("gt_pose");
  obj.gt_pose = Pose{pose.at("beta").get<double>(), read_vec<3>(pose.at("t"))};
  const json& dims = j.at("gt_dims");
  obj.gt_dims = {dims.at("l").get<double>(), dims.at("h").get<double>(),
                 dims.at("w").get<double>()};
  obj.gt_dims.validate();
  obj.correspondences.camera = cam;
  for (const json& p : j.at("points")) {
    Correspondence c;
    c.oc = read_vec<3>(p.at("oc"));
    c.uv_obs = read_vec<2>(p.at("uv"));
    c.sigma = read_vec<2>(p.at("sigma"));
    obj.correspondences.items.push_back(c);
    obj.gt_noc.push_back(NocPoint{read_vec<3>(p.at("noc"))});
    obj.sigma_true.push_back(read_vec<2>(p.at("sigma_true")));
    obj.outlier.push_back(p.at("outlier").get<bool>());
  }
  return obj;
}

json parse_document(std::istream& is, const char* what) {
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " is not valid JSON: " + e.what());
  }
}

void check_version(const json& doc, int expected, const char* what) {
  const int version = doc.at("schema_version").get<int>();
  if (version != expected) {
    throw Error(ErrorCode::kSchemaMismatch, std::string(what) + " schema_version " +
                                                std::to_string(version) +
                                                " is not supported (expected " +
                                                std::to_string(expected) + ")");
  }
}

}  // namespace

std::string to_string(DeclaredSigmaMode mode) {
  switch (mode) {
    case DeclaredSigmaMode::kExact:
      return "exact";
    case DeclaredSigmaMode::kInflated:
      return "inflated";
    case DeclaredSigmaMode::kUniform:
      return "uniform";
  }
  return "exact";
}

DeclaredSigmaMode parse_declared_mode(const std::string& text) {
  if (text == "exact") return DeclaredSigmaMode::kExact;
  if (text == "inflated") return DeclaredSigmaMode::kInflated;
  if (text == "uniform") return DeclaredSigmaMode::kUniform;
  throw Error(ErrorCode::kInvalidArgument, "unknown declared-sigma mode '" + text + "'");
}

void write_scene(std::ostream& os, const Scene& scene) {
  const SceneConfig& cfg = scene.config;
  json objects = json::array();
  for (const SceneObject& obj : scene.objects) objects.push_back(object_to_json(obj));
  const json doc = {
      {"schema_version", kSceneSchemaVersion},
      {"units", {{"angle", "rad"}, {"length", "m"}, {"pixel", "px"}}},
      {"seed", cfg.seed},
      {"generator",
       {{"n_objects", cfg.n_objects},
        {"pts_per_object", cfg.pts_per_object},
        {"noise", noise_to_json(cfg.noise)},
        {"image_width", cfg.image_width},
        {"image_height", cfg.image_height},
        {"z_min", cfg.z_min},
        {"z_max", cfg.z_max},
        {"max_placement_attempts", cfg.max_placement_attempts}}},
      {"camera", camera_to_json(cfg.camera)},
      {"objects", std::move(objects)}};
  os << doc.dump(1) << '\n';
}

Scene read_scene(std::istream& is) {
  const json doc = parse_document(is, "scene");
  try {
    check_version(doc, kSceneSchemaVersion, "scene");
    Scene scene;
    SceneConfig& cfg = scene.config;
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    const json& gen = doc.at("generator");
    cfg.n_objects = gen.at("n_objects").get<int>();
    cfg.pts_per_object = gen.at("pts_per_object").get<int>();
    cfg.noise = noise_from_json(gen.at("noise"));
    cfg.image_width = gen.at("image_width").get<double>();
    cfg.image_height = gen.at("image_height").get<double>();
    cfg.z_min = gen.at("z_min").get<double>();
    cfg.z_max = gen.at("z_max").get<double>();
    cfg.max_placement_attempts = gen.at("max_placement_attempts").get<int>();
    cfg.camera = camera_from_json(doc.at("camera"));
    cfg.camera.validate();
    for (const json& o : doc.at("objects")) {
      scene.objects.push_back(object_from_json(o, cfg.camera));
    }
    return scene;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed scene: ") + e.what());
  }
}

void write_calibration(std::ostream& os, const CalibrationFit& fit) {
  const json doc = {{"schema_version", kCalibrationSchemaVersion},
                    {"k", vec(fit.k.k)},
                    {"loss_trace", fit.loss_trace}};
  os << doc.dump(1) << '\n';
}

CalibrationVector read_calibration(std::istream& is) {
  const json doc = parse_document(is, "calibration");
  try {
    check_version(doc, kCalibrationSchemaVersion, "calibration");
    CalibrationVector k;
    k.k = read_vec<4>(doc.at("k"));
    if (!k.k.allFinite()) throw Error(ErrorCode::kInvalidArgument, "calibration k is not finite");
    return k;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed calibration: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::kIo, "failed reading '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "' for writing");
  out << contents;
  out.flush();
  if (!out) throw Error(ErrorCode::kIo, "failed writing '" + path.string() + "'");
}

}  // namespace probloc::cli
