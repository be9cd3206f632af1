#pragma once

#include "hsnorm/common.hpp"

#include <vector>

namespace hsnorm {

// Smallest-eigenvalue eigenvector of the centroid-centered covariance, with
// z >= 0. Throws degenerate_patch for collinear or coincident input.
Vec3 pca_normal(const Points& patch);

// Taylor coefficients of a degree-n height function z = J(x, y). Monomials
// x^i y^j are stored by total degree, then by ascending i.
struct JetCoefficients {
  int order = 0;
  Eigen::VectorXd alpha;
  double residual = 0.0;       // sum of squared height residuals
  bool ill_conditioned = false;  // minimum-norm solution of a rank-deficient system

  static int count(int order) { return (order + 1) * (order + 2) / 2; }
  static int index(int i, int j);
  double coeff(int i, int j) const { return alpha(index(i, j)); }
  double evaluate(double x, double y) const;
};

// Least-squares jet fit on a patch whose z axis is the height direction.
JetCoefficients fit_jet(const Points& patch, int order);

// (-a10, -a01, 1) / sqrt(1 + a10^2 + a01^2)
Vec3 jet_normal(const JetCoefficients& coeffs);

}  // namespace hsnorm
