#include "hsnorm/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace hsnorm::synthetic {

PointCloud sphere(int count, double radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  PointCloud c;
  c.name = "sphere";
  c.points.resize(count, 3);
  Points n(count, 3);
  for (int i = 0; i < count; ++i) {
    Vec3 d(g(rng), g(rng), g(rng));
    d.normalize();
    n.row(i) = d.transpose();
    c.points.row(i) = radius * d.transpose();
  }
  c.normals = std::move(n);
  return c;
}

PointCloud torus(int count, double major_radius, double minor_radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud c;
  c.name = "torus";
  c.points.resize(count, 3);
  Points n(count, 3);
  const double two_pi = 2.0 * std::numbers::pi;
  int i = 0;
  while (i < count) {
    // rejection sampling gives uniform area density
    const double theta = two_pi * u(rng);
    const double phi = two_pi * u(rng);
    const double w = (major_radius + minor_radius * std::cos(phi)) / (major_radius + minor_radius);
    if (u(rng) > w) continue;
    const Vec3 dir(std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta), std::sin(phi));
    const Vec3 centre(major_radius * std::cos(theta), major_radius * std::sin(theta), 0.0);
    c.points.row(i) = (centre + minor_radius * dir).transpose();
    n.row(i) = dir.transpose();
    ++i;
  }
  c.normals = std::move(n);
  return c;
}

PointCloud quadric(int count, double a, double b, double c2, double extent, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-extent, extent);
  PointCloud c;
  c.name = "quadric";
  c.points.resize(count, 3);
  Points n(count, 3);
  for (int i = 0; i < count; ++i) {
    const double x = u(rng), y = u(rng);
    c.points.row(i) << x, y, a * x * x + b * x * y + c2 * y * y;
    Vec3 g(-(2 * a * x + b * y), -(b * x + 2 * c2 * y), 1.0);
    n.row(i) = g.normalized().transpose();
  }
  c.normals = std::move(n);
  return c;
}

PointCloud plane(int count, const Vec3& normal, double extent, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-extent, extent);
  const Vec3 nz = normal.normalized();
  Vec3 t1 = nz.unitOrthogonal();
  Vec3 t2 = nz.cross(t1);
  PointCloud c;
  c.name = "plane";
  c.points.resize(count, 3);
  Points n(count, 3);
  for (int i = 0; i < count; ++i) {
    c.points.row(i) = (u(rng) * t1 + u(rng) * t2).transpose();
    n.row(i) = nz.transpose();
  }
  c.normals = std::move(n);
  return c;
}

PointCloud with_noise(const PointCloud& cloud, double sigma, std::uint64_t seed, std::string name) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  PointCloud out = cloud;
  out.name = std::move(name);
  out.variant = variant_from_name(out.name);
  for (Eigen::Index i = 0; i < out.points.rows(); ++i) {
    for (int k = 0; k < 3; ++k) out.points(i, k) += g(rng);
  }
  return out;
}

Mat3 random_rotation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q.toRotationMatrix();
}

}  // namespace hsnorm::synthetic
