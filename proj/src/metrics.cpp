#include "hsnorm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace hsnorm {

double angular_error(const Vec3& n_pred, const Vec3& n_gt) {
  const double c = std::clamp(std::abs(n_pred.dot(n_gt)), 0.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

double rmse(const std::vector<double>& errors_deg) {
  if (errors_deg.empty()) fail(ErrorKind::validation, "rmse of an empty error list");
  double s = 0.0;
  for (double e : errors_deg) s += e * e;
  return std::sqrt(s / static_cast<double>(errors_deg.size()));
}

double pgp(const std::vector<double>& errors_deg, double alpha) {
  if (errors_deg.empty()) fail(ErrorKind::validation, "pgp of an empty error list");
  const auto good = std::count_if(errors_deg.begin(), errors_deg.end(), [alpha](double e) { return e < alpha; });
  return static_cast<double>(good) / static_cast<double>(errors_deg.size());
}

CleanReference::CleanReference(PointCloud clean) : cloud_(std::move(clean)), tree_(cloud_.points) {
  if (!cloud_.normals) fail(ErrorKind::unsupported, "clean reference '" + cloud_.name + "' has no normals");
}

Vec3 CleanReference::nearest_normal(const Vec3& p) const {
  return cloud_.normals->row(tree_.nearest(p, 1).front()).transpose();
}

double cnd_error(const Vec3& n_pred, const Vec3& query_point, const CleanReference* reference) {
  if (!reference) fail(ErrorKind::unsupported, "CND needs a clean reference cloud");
  return angular_error(n_pred, reference->nearest_normal(query_point));
}

namespace {

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

std::string alpha_key(double a) { return fixed(a, 0); }

}  // namespace

MetricsReport build_report(const std::vector<ShapeResult>& shapes, nlohmann::json metadata) {
  MetricsReport r;
  std::map<Variant, std::vector<double>> by_variant, cnd_by_variant;
  std::map<Variant, std::map<double, std::vector<double>>> pgp_by_variant;
  std::map<double, std::vector<double>> pgp_all;
  std::vector<double> cnd_all;
  for (const auto& s : shapes) {
    const double e = rmse(s.errors);
    r.per_shape_rmse[s.name] = e;
    by_variant[s.variant].push_back(e);
    for (double a : kPgpAlphas) {
      const double f = pgp(s.errors, a);
      pgp_by_variant[s.variant][a].push_back(f);
      pgp_all[a].push_back(f);
    }
    if (!s.cnd_errors.empty()) {
      const double c = rmse(s.cnd_errors);
      cnd_by_variant[s.variant].push_back(c);
      cnd_all.push_back(c);
    }
  }
  std::vector<double> category_means;
  for (Variant v : kAllVariants) {
    const auto it = by_variant.find(v);
    if (it == by_variant.end()) continue;
    r.per_variant_rmse[v] = mean(it->second);
    category_means.push_back(r.per_variant_rmse[v]);
    for (const auto& [a, fs] : pgp_by_variant[v]) r.per_variant_pgp[v][a] = mean(fs);
  }
  if (!category_means.empty()) r.average = mean(category_means);
  for (const auto& [a, fs] : pgp_all) r.pgp_curve[a] = mean(fs);
  for (const auto& [v, cs] : cnd_by_variant) r.per_variant_cnd[v] = mean(cs);
  if (!cnd_all.empty()) r.cnd = mean(cnd_all);

  if (metadata.is_null()) metadata = nlohmann::json::object();
  metadata["average_definition"] = "mean over the present noise/density categories of the per-category mean shape RMSE";
  metadata["pgp_definition"] = "per-shape fraction of errors below alpha, averaged over shapes";
  metadata["angular_error"] = "unoriented, degrees";
  metadata["categories_present"] = static_cast<int>(category_means.size());
  r.metadata = std::move(metadata);
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["per_shape_rmse"] = r.per_shape_rmse;
  nlohmann::json pv = nlohmann::json::object();
  for (const auto& [v, e] : r.per_variant_rmse) pv[std::string(to_string(v))] = e;
  j["per_variant_rmse"] = pv;
  j["average_rmse"] = r.average ? nlohmann::json(*r.average) : nlohmann::json(nullptr);
  nlohmann::json curve = nlohmann::json::object();
  for (const auto& [a, f] : r.pgp_curve) curve[alpha_key(a)] = f;
  j["pgp_curve"] = curve;
  nlohmann::json vp = nlohmann::json::object();
  for (const auto& [v, c] : r.per_variant_pgp) {
    nlohmann::json row = nlohmann::json::object();
    for (const auto& [a, f] : c) row[alpha_key(a)] = f;
    vp[std::string(to_string(v))] = row;
  }
  j["per_variant_pgp"] = vp;
  j["cnd_rmse"] = r.cnd ? nlohmann::json(*r.cnd) : nlohmann::json(nullptr);
  nlohmann::json vc = nlohmann::json::object();
  for (const auto& [v, e] : r.per_variant_cnd) vc[std::string(to_string(v))] = e;
  j["per_variant_cnd"] = vc;
  j["metadata"] = r.metadata;
  return j;
}

std::string rmse_table(const MetricsReport& r, const std::string& row_label) {
  std::string head = "| Method |", rule = "|---|", row = "| " + row_label + " |";
  for (Variant v : kAllVariants) {
    head += " " + std::string(table_label(v)) + " |";
    rule += "---|";
    const auto it = r.per_variant_rmse.find(v);
    row += " " + (it == r.per_variant_rmse.end() ? std::string("-") : fixed(it->second, 2)) + " |";
  }
  head += " Avg. |";
  rule += "---|";
  row += " " + (r.average ? fixed(*r.average, 2) : std::string("-")) + " |";
  return head + "\n" + rule + "\n" + row + "\n";
}

std::string pgp_csv(const MetricsReport& r) {
  std::string out = "alpha,fraction\n";
  for (const auto& [a, f] : r.pgp_curve) out += alpha_key(a) + "," + fixed(f, 6) + "\n";
  return out;
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir, const std::string& row_label) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::io, "cannot write " + (dir / name).string());
    f << text;
  };
  write("report.json", to_json(report).dump(2) + "\n");
  write("pgp_curve.csv", pgp_csv(report));
  write("rmse_table.md", rmse_table(report, row_label));
}

}  // namespace hsnorm
