#include "hsnorm/normal_head.hpp"

#include <algorithm>
#include <cmath>

namespace hsnorm {

using nn::Graph;
using nn::Var;

namespace {
// Logit range kept finite so the weights stay strictly inside (c, c + 1).
constexpr double kLogitLimit = 30.0;
}

NormalHead::NormalHead(nn::ParameterStore& store, const std::string& name, int encoding_dim, double weight_floor,
                       nn::Rng& rng)
    : floor_(weight_floor),
      phi_(store, name + ".phi", encoding_dim, std::max(1, encoding_dim / 2), 1, rng),
      h_(store, name + ".h", encoding_dim, std::max(1, encoding_dim / 2), 3, rng) {}

Var NormalHead::point_weights(Graph& g, Var surface) const {
  Var logits = nn::clamp(phi_(g, surface), -kLogitLimit, kLogitLimit);
  return nn::add_scalar(nn::sigmoid(logits), floor_);
}

Var NormalHead::raw_normal(Graph& g, Var surface, Var weights) const {
  if (weights.rows() != surface.rows() || weights.cols() != 1) {
    fail(ErrorKind::shape, "normal head: weight vector does not match surface rows");
  }
  return h_(g, nn::col_max(nn::scale_rows(surface, weights)));
}

Var NormalHead::predict_normal(Graph& g, Var surface, Var weights) const {
  Var raw = raw_normal(g, surface, weights);
  const double len = raw.value().norm();
  if (!std::isfinite(len) || len == 0.0) fail(ErrorKind::numerical, "normal head produced a degenerate vector");
  return nn::l2_normalize(raw);
}

double sin_loss(const Vec3& n_hat, const Vec3& n_gt) { return n_hat.cross(n_gt).norm(); }

Var sin_loss(Graph& g, Var n_hat, const Vec3& n_gt) {
  if (n_hat.rows() != 1 || n_hat.cols() != 3) fail(ErrorKind::shape, "sin_loss expects a 1 x 3 normal");
  // Row vector n times K gives n x n_gt.
  nn::Mat k(3, 3);
  k << 0.0, -n_gt.z(), n_gt.y(),
       n_gt.z(), 0.0, -n_gt.x(),
       -n_gt.y(), n_gt.x(), 0.0;
  return nn::norm(nn::matmul(n_hat, g.constant(std::move(k))));
}

WeightTargets weight_targets(const Points& coords, const Vec3& n_gt) {
  if (coords.rows() == 0) fail(ErrorKind::shape, "weight targets need at least one point");
  const Eigen::VectorXd d = (coords * n_gt).cwiseAbs();
  WeightTargets t;
  t.delta = std::max(0.0025, 0.3 * d.squaredNorm() / static_cast<double>(d.size()));
  t.w = (-(d.array().square()) / t.delta).exp().matrix();
  return t;
}

double weight_loss(const Eigen::VectorXd& w, const Eigen::VectorXd& targets) {
  if (w.size() != targets.size() || w.size() == 0) fail(ErrorKind::shape, "weight loss: length mismatch");
  return (targets - w).squaredNorm() / static_cast<double>(w.size());
}

Var weight_loss(Graph& g, Var w, const Eigen::VectorXd& targets) {
  if (w.cols() != 1 || w.rows() != targets.size()) fail(ErrorKind::shape, "weight loss: length mismatch");
  return nn::mean(nn::square(nn::sub(w, g.constant(targets))));
}

double total_loss(double l_sin, double l_wt, const LossWeights& weights) {
  return weights.sin * l_sin + weights.wt * l_wt;
}

}  // namespace hsnorm
