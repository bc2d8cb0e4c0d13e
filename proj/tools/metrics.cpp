#include "metrics.hpp"

#include <array>
#include <istream>
#include <ostream>

#include "csv.hpp"
#include "probloc/errors.hpp"
#include "probloc/format.hpp"

namespace probloc::cli {

namespace {

constexpr std::array<const char*, 18> kBaseColumns = {
    "schema_version", "id",     "status", "l_m",         "h_m",
    "w_m",            "gt_beta_rad", "gt_tx_m", "gt_ty_m", "gt_tz_m",
    "beta_rad",       "tx_m",   "ty_m",   "tz_m",        "trans_err_m",
    "yaw_err_rad",    "nll",    "converged"};

constexpr std::array<const char*, 3> kScoreColumns = {"c_2d", "c_3dloc", "c_3d"};

std::vector<std::pair<int, int>> upper_triangle() {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < 4; ++i) {
    for (int j = i; j < 4; ++j) out.emplace_back(i, j);
  }
  return out;
}

std::string cov_column(int i, int j) {
  return "cov_" + std::to_string(i) + std::to_string(j);
}

std::string flag(bool b) { return b ? "1" : "0"; }

bool parse_flag(const std::string& s, std::string_view column) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw Error(ErrorCode::kInvalidArgument,
              "column '" + std::string(column) + "': expected 0 or 1, got '" + s + "'");
}

}  // namespace

std::vector<std::string> metrics_header(bool with_score) {
  std::vector<std::string> h(kBaseColumns.begin(), kBaseColumns.end());
  h.emplace_back("hessian_conditioned");
  for (const auto& [i, j] : upper_triangle()) h.push_back(cov_column(i, j));
  if (with_score) h.insert(h.end(), kScoreColumns.begin(), kScoreColumns.end());
  return h;
}

void write_metrics(std::ostream& os, std::span<const MetricsRow> rows) {
  const bool with_score = !rows.empty() && rows.front().score.has_value();
  const auto header = metrics_header(with_score);
  write_csv_record(os, header);
  std::vector<std::string> f;
  for (const MetricsRow& r : rows) {
    if (r.score.has_value() != with_score) {
      throw Error(ErrorCode::kInvalidArgument, "rows disagree on the score columns");
    }
    f.clear();
    f.push_back(std::to_string(kMetricsSchemaVersion));
    f.push_back(std::to_string(r.id));
    f.push_back(r.status);
    for (const double v : {r.dims.l, r.dims.h, r.dims.w, r.gt.beta, r.gt.t.x(), r.gt.t.y(),
                           r.gt.t.z()}) {
      f.push_back(format_number(v));
    }
    if (r.ok()) {
      for (const double v : {r.est.beta, r.est.t.x(), r.est.t.y(), r.est.t.z(), r.trans_err_m,
                             r.yaw_err_rad, r.nll}) {
        f.push_back(format_number(v));
      }
      f.push_back(flag(r.converged));
      f.push_back(flag(r.hessian_conditioned));
      for (const auto& [i, j] : upper_triangle()) f.push_back(format_number(r.cov(i, j)));
    } else {
      f.resize(header.size() - (with_score ? kScoreColumns.size() : 0));
    }
    if (with_score) {
      if (r.ok()) {
        f.push_back(format_number(r.score->c_2d));
        f.push_back(format_number(r.score->c_3dloc));
        f.push_back(format_number(r.score->c_3d));
      } else {
        f.resize(header.size());
      }
    }
    write_csv_record(os, f);
  }
}

MetricsTable read_metrics(std::istream& is) {
  const CsvTable t = read_csv(is);
  const auto col = [&](const std::string& name) { return t.column(name); };
  const std::size_t c_version = col("schema_version");
  const std::size_t c_id = col("id");
  const std::size_t c_status = col("status");
  std::array<std::size_t, 7> c_gt{};
  {
    const std::array<const char*, 7> names = {"l_m",     "h_m",     "w_m",    "gt_beta_rad",
                                              "gt_tx_m", "gt_ty_m", "gt_tz_m"};
    for (std::size_t i = 0; i < names.size(); ++i) c_gt[i] = col(names[i]);
  }
  std::array<std::size_t, 7> c_est{};
  {
    const std::array<const char*, 7> names = {"beta_rad",    "tx_m",        "ty_m", "tz_m",
                                              "trans_err_m", "yaw_err_rad", "nll"};
    for (std::size_t i = 0; i < names.size(); ++i) c_est[i] = col(names[i]);
  }
  const std::size_t c_conv = col("converged");
  const std::size_t c_cond = col("hessian_conditioned");
  std::vector<std::size_t> c_cov;
  for (const auto& [i, j] : upper_triangle()) c_cov.push_back(col(cov_column(i, j)));
  const bool has_c2d = t.has_column("c_2d");
  const std::size_t c_c2d = has_c2d ? col("c_2d") : 0;
  const bool has_score = has_c2d && t.has_column("c_3dloc") && t.has_column("c_3d");
  const std::size_t c_loc = has_score ? col("c_3dloc") : 0;
  const std::size_t c_c3d = has_score ? col("c_3d") : 0;

  MetricsTable out;
  if (has_c2d) out.c_2d.emplace();
  for (const auto& row : t.rows) {
    const auto num = [&](std::size_t c) { return parse_double(row[c], t.header[c]); };
    if (parse_int(row[c_version], "schema_version") != kMetricsSchemaVersion) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "metrics schema_version " + row[c_version] + " is not supported (expected " +
                      std::to_string(kMetricsSchemaVersion) + ")");
    }
    MetricsRow r;
    r.id = static_cast<int>(parse_int(row[c_id], "id"));
    r.status = row[c_status];
    r.dims = {num(c_gt[0]), num(c_gt[1]), num(c_gt[2])};
    r.gt = Pose{num(c_gt[3]), {num(c_gt[4]), num(c_gt[5]), num(c_gt[6])}};
    if (r.ok()) {
      r.est = Pose{num(c_est[0]), {num(c_est[1]), num(c_est[2]), num(c_est[3])}};
      r.trans_err_m = num(c_est[4]);
      r.yaw_err_rad = num(c_est[5]);
      r.nll = num(c_est[6]);
      r.converged = parse_flag(row[c_conv], "converged");
      r.hessian_conditioned = parse_flag(row[c_cond], "hessian_conditioned");
      const auto tri = upper_triangle();
      for (std::size_t k = 0; k < tri.size(); ++k) {
        const auto [i, j] = tri[k];
        r.cov(i, j) = r.cov(j, i) = num(c_cov[k]);
      }
    }
    if (has_c2d) out.c_2d->push_back(r.ok() ? num(c_c2d) : 0.0);
    if (has_score) {
      r.score.emplace();
      if (r.ok()) *r.score = Score{num(c_loc), num(c_c2d), num(c_c3d)};
    }
    out.rows.push_back(std::move(r));
  }
  return out;
}

}  // namespace probloc::cli
