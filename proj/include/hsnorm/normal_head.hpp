#pragma once

#include "hsnorm/nn/layers.hpp"

namespace hsnorm {

struct LossWeights {
  double sin = 0.1;
  double wt = 1.0;
};

// Maps the surface rows to point weights and a unit normal:
//   w_i = c + sigmoid(phi(N_i)),  n = normalize(H(max_i w_i N_i)).
// phi and H are two-layer per-row MLPs with hidden width E/2.
class NormalHead {
 public:
  NormalHead() = default;
  NormalHead(nn::ParameterStore& store, const std::string& name, int encoding_dim, double weight_floor,
             nn::Rng& rng);

  nn::Var point_weights(nn::Graph& g, nn::Var surface) const;    // M x 1
  // Unnormalized H output (1 x 3).
  nn::Var raw_normal(nn::Graph& g, nn::Var surface, nn::Var weights) const;
  // Unit normal (1 x 3); throws ErrorKind::numerical when H returns the zero vector.
  nn::Var predict_normal(nn::Graph& g, nn::Var surface, nn::Var weights) const;

  double weight_floor() const { return floor_; }

 private:
  double floor_ = 0.01;
  nn::Mlp2 phi_, h_;
};

// |n_hat x n_gt|
double sin_loss(const Vec3& n_hat, const Vec3& n_gt);
nn::Var sin_loss(nn::Graph& g, nn::Var n_hat, const Vec3& n_gt);

struct WeightTargets {
  Eigen::VectorXd w;  // exp(-d_m^2 / delta)
  double delta = 0.0025;
};

// d_m = |p_m . n|, delta = max(0.0025, 0.3 * mean(d_m^2)).
WeightTargets weight_targets(const Points& coords, const Vec3& n_gt);

// Mean squared difference.
double weight_loss(const Eigen::VectorXd& w, const Eigen::VectorXd& targets);
nn::Var weight_loss(nn::Graph& g, nn::Var w, const Eigen::VectorXd& targets);

double total_loss(double l_sin, double l_wt, const LossWeights& weights = {});

struct LossReport {
  double l_sin = 0.0;
  double l_wt = 0.0;
  double total = 0.0;
  Eigen::VectorXd w_targets;
  double delta = 0.0;
};

}  // namespace hsnorm
