#pragma once

#include "hsnorm/dataset_io.hpp"
#include "hsnorm/patch_geometry.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

namespace hsnorm {

inline constexpr double kPgpAlphas[] = {5.0, 10.0, 15.0, 20.0, 25.0, 30.0};

// Unoriented angle in degrees: acos(clamp(|a . b|, 0, 1)).
double angular_error(const Vec3& n_pred, const Vec3& n_gt);
double rmse(const std::vector<double>& errors_deg);
// Fraction of errors strictly below alpha.
double pgp(const std::vector<double>& errors_deg, double alpha);

// Nearest-clean-point reference for noisy inputs.
class CleanReference {
 public:
  explicit CleanReference(PointCloud clean);
  // Normal of the clean point nearest to `p`.
  Vec3 nearest_normal(const Vec3& p) const;

 private:
  PointCloud cloud_;
  KdTree tree_;
};

// Throws ErrorKind::unsupported when `reference` is null.
double cnd_error(const Vec3& n_pred, const Vec3& query_point, const CleanReference* reference);

struct ShapeResult {
  std::string name;
  Variant variant = Variant::clean;
  std::vector<double> errors;          // degrees, one per evaluated point
  std::vector<double> cnd_errors;      // empty when no clean reference exists
};

struct MetricsReport {
  std::map<std::string, double> per_shape_rmse;
  std::map<Variant, double> per_variant_rmse;    // mean of shape RMSEs
  std::optional<double> average;                 // mean over present categories
  std::map<double, double> pgp_curve;            // alpha -> mean over shapes
  std::map<Variant, std::map<double, double>> per_variant_pgp;
  std::optional<double> cnd;                     // mean CND RMSE over shapes with a reference
  std::map<Variant, double> per_variant_cnd;
  nlohmann::json metadata = nlohmann::json::object();
};

MetricsReport build_report(const std::vector<ShapeResult>& shapes, nlohmann::json metadata = {});

nlohmann::json to_json(const MetricsReport& report);
// Markdown table with None/Low/Med./High/Stripe/Grad./Avg. columns.
std::string rmse_table(const MetricsReport& report, const std::string& row_label);
std::string pgp_csv(const MetricsReport& report);

// Writes report.json, pgp_curve.csv and rmse_table.md into `dir`.
void write_report(const MetricsReport& report, const std::filesystem::path& dir, const std::string& row_label);

}  // namespace hsnorm
