#pragma once

#include "hsnorm/dataset_io.hpp"

#include <cstdint>

namespace hsnorm::synthetic {

// Analytic test shapes with exact normals. Points are drawn with a seeded RNG.
PointCloud sphere(int count, double radius, std::uint64_t seed);
PointCloud torus(int count, double major_radius, double minor_radius, std::uint64_t seed);
// Height field z = a x^2 + b x y + c y^2 over [-extent, extent]^2.
PointCloud quadric(int count, double a, double b, double c, double extent, std::uint64_t seed);
// Plane through the origin with the given unit normal, sampled in a square of half-width `extent`.
PointCloud plane(int count, const Vec3& normal, double extent, std::uint64_t seed);

// Adds isotropic Gaussian noise of standard deviation `sigma`; normals are kept.
PointCloud with_noise(const PointCloud& cloud, double sigma, std::uint64_t seed, std::string name);

Mat3 random_rotation(std::uint64_t seed);

}  // namespace hsnorm::synthetic
