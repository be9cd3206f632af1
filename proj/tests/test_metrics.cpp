#include "doctest.h"

#include "hsnorm/metrics.hpp"
#include "hsnorm/synthetic.hpp"
#include "test_util.hpp"

#include <random>

using namespace hsnorm;

TEST_CASE("angular error is unoriented") {
  const Vec3 z = Vec3::UnitZ();
  CHECK(angular_error(z, z) == 0.0);
  CHECK(angular_error(z, -z) == 0.0);
  CHECK(angular_error(z, Vec3::UnitX()) == doctest::Approx(90.0));
  CHECK(angular_error(z, Vec3(0, 1, 1).normalized()) == doctest::Approx(45.0));
}

TEST_CASE("rmse examples") {
  CHECK(rmse({0, 0, 0}) == 0.0);
  CHECK(rmse({90}) == 90.0);
  CHECK(rmse({3, 4}) == doctest::Approx(std::sqrt(12.5)));
  CHECK_THROWS_AS(rmse({}), Error);
}

TEST_CASE("pgp examples") {
  for (double a : kPgpAlphas) CHECK(pgp({0, 0}, a) == 1.0);
  CHECK(pgp({4, 6}, 5) == 0.5);
  CHECK(pgp({5}, 5) == 0.0);
  CHECK_THROWS_AS(pgp({}, 5), Error);
}

TEST_CASE("pgp is monotone in alpha") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 90.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> e(1 + t % 17);
    for (auto& x : e) x = u(rng);
    double prev = 0.0;
    for (double a : kPgpAlphas) {
      const double f = pgp(e, a);
      CHECK(f >= prev);
      CHECK(f <= 1.0);
      prev = f;
    }
  }
}

TEST_CASE("CND against a clean reference") {
  PointCloud clean = synthetic::sphere(2000, 1.0, 3);
  const CleanReference ref(clean);
  for (int i = 0; i < 20; ++i) {
    const Vec3 p = clean.points.row(i).transpose();
    const Vec3 n = clean.normals->row(i).transpose();
    const Vec3 pred = (n + Vec3(0.1, 0.0, 0.0)).normalized();
    CHECK(cnd_error(pred, p, &ref) == doctest::Approx(angular_error(pred, n)));
  }
  try {
    cnd_error(Vec3::UnitZ(), Vec3::Zero(), nullptr);
    FAIL("expected unsupported error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unsupported);
  }
  PointCloud bare;
  bare.points = Points::Zero(3, 3);
  CHECK_THROWS_AS(CleanReference{bare}, Error);
}

TEST_CASE("report aggregation over shapes and categories") {
  std::vector<ShapeResult> shapes = {
      {"a", Variant::clean, {3, 4}, {}},
      {"b", Variant::clean, {1, 1}, {}},
      {"a_noise_white_1.00e-02", Variant::noise_high, {6, 8}, {2, 2}},
  };
  const MetricsReport r = build_report(shapes);
  CHECK(r.per_shape_rmse.at("a") == doctest::Approx(std::sqrt(12.5)));
  CHECK(r.per_variant_rmse.at(Variant::clean) == doctest::Approx((std::sqrt(12.5) + 1.0) / 2));
  CHECK(r.per_variant_rmse.at(Variant::noise_high) == doctest::Approx(std::sqrt(50.0)));
  REQUIRE(r.average);
  CHECK(*r.average == doctest::Approx(((std::sqrt(12.5) + 1.0) / 2 + std::sqrt(50.0)) / 2));
  CHECK(r.pgp_curve.at(5.0) == doctest::Approx((1.0 + 1.0 + 0.0) / 3));
  REQUIRE(r.cnd);
  CHECK(*r.cnd == doctest::Approx(2.0));
  CHECK(r.metadata.at("categories_present") == 2);
}

TEST_CASE("table layout and deterministic files") {
  std::vector<ShapeResult> shapes;
  for (Variant v : kAllVariants) shapes.push_back({"s" + std::string(to_string(v)), v, {1.0, 2.0}, {}});
  const MetricsReport r = build_report(shapes);
  const std::string table = rmse_table(r, "PCA");
  CHECK(table.rfind("| Method | None | Low | Med. | High | Stripe | Grad. | Avg. |\n", 0) == 0);
  CHECK(table.find("| PCA | 1.58 | 1.58 | 1.58 | 1.58 | 1.58 | 1.58 | 1.58 |") != std::string::npos);
  CHECK(pgp_csv(r).rfind("alpha,fraction\n5,1.000000\n10,1.000000\n", 0) == 0);

  hsnorm::testing::TempDir d1, d2;
  write_report(r, d1.path(), "PCA");
  write_report(build_report(shapes), d2.path(), "PCA");
  for (const char* f : {"report.json", "pgp_curve.csv", "rmse_table.md"}) {
    CHECK(hsnorm::testing::read_text(d1 / f) == hsnorm::testing::read_text(d2 / f));
    CHECK_FALSE(hsnorm::testing::read_text(d1 / f).empty());
  }
}

TEST_CASE("missing categories are shown as dashes") {
  const MetricsReport r = build_report({{"x", Variant::stripe, {2.0}, {}}});
  CHECK(rmse_table(r, "M").find("| M | - | - | - | - | 2.00 | - | 2.00 |") != std::string::npos);
}
