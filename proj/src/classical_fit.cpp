#include "hsnorm/classical_fit.hpp"

#include <cmath>

namespace hsnorm {

Vec3 pca_normal(const Points& patch) {
  if (patch.rows() < 3) fail(ErrorKind::degenerate_patch, "PCA needs at least 3 points");
  const Eigen::RowVector3d centroid = patch.colwise().mean();
  const Points c = patch.rowwise() - centroid;
  const Mat3 cov = c.transpose() * c / static_cast<double>(patch.rows());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 ev = eig.eigenvalues();
  if (!(ev(1) > 1e-12 * ev(2))) fail(ErrorKind::degenerate_patch, "collinear or coincident patch");
  Vec3 n = eig.eigenvectors().col(0).normalized();
  if (n.z() < 0.0) n = -n;
  return n;
}

int JetCoefficients::index(int i, int j) {
  const int d = i + j;
  return d * (d + 1) / 2 + i;
}

double JetCoefficients::evaluate(double x, double y) const {
  double z = 0.0;
  for (int d = 0; d <= order; ++d) {
    for (int i = 0; i <= d; ++i) z += coeff(i, d - i) * std::pow(x, i) * std::pow(y, d - i);
  }
  return z;
}

JetCoefficients fit_jet(const Points& patch, int order) {
  if (order < 1) fail(ErrorKind::validation, "jet order must be >= 1");
  const int cols = JetCoefficients::count(order);
  if (patch.rows() < cols) {
    fail(ErrorKind::validation, "order-" + std::to_string(order) + " jet needs at least " + std::to_string(cols) +
                                    " points, got " + std::to_string(patch.rows()));
  }
  // Precondition by the patch extent so monomial columns stay O(1).
  double h = patch.leftCols<2>().cwiseAbs().maxCoeff();
  if (!(h > 0.0)) h = 1.0;

  Eigen::MatrixXd v(patch.rows(), cols);
  for (Eigen::Index r = 0; r < patch.rows(); ++r) {
    const double x = patch(r, 0) / h, y = patch(r, 1) / h;
    for (int d = 0; d <= order; ++d) {
      for (int i = 0; i <= d; ++i) v(r, JetCoefficients::index(i, d - i)) = std::pow(x, i) * std::pow(y, d - i);
    }
  }
  Eigen::VectorXd col_scale = v.colwise().norm().transpose();
  for (int c = 0; c < cols; ++c) {
    if (col_scale(c) == 0.0) col_scale(c) = 1.0;
  }
  const Eigen::MatrixXd vs = v * col_scale.cwiseInverse().asDiagonal();
  const Eigen::VectorXd z = patch.col(2);

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(vs);
  Eigen::VectorXd beta = cod.solve(z);

  JetCoefficients out;
  out.order = order;
  out.ill_conditioned = cod.rank() < cols;
  out.residual = (vs * beta - z).squaredNorm();
  out.alpha.resize(cols);
  for (int d = 0; d <= order; ++d) {
    for (int i = 0; i <= d; ++i) {
      const int k = JetCoefficients::index(i, d - i);
      out.alpha(k) = beta(k) / col_scale(k) / std::pow(h, d);
    }
  }
  return out;
}

Vec3 jet_normal(const JetCoefficients& coeffs) {
  const double a10 = coeffs.coeff(1, 0);
  const double a01 = coeffs.coeff(0, 1);
  return Vec3(-a10, -a01, 1.0) / std::sqrt(1.0 + a10 * a10 + a01 * a01);
}

}  // namespace hsnorm
