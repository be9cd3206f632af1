#include "hsnorm/nn/layers.hpp"

#include <cmath>

namespace hsnorm::nn {

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, bool bias)
    : in_(in), out_(out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  w_ = &store.create(name + ".weight", uniform_init(in, out, bound, rng));
  if (bias) b_ = &store.create(name + ".bias", uniform_init(1, out, bound, rng));
}

Var Linear::operator()(Graph& g, Var x) const {
  if (b_) return linear(x, g.param(*w_), g.param(*b_));
  return linear(x, g.param(*w_));
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int dim) {
  gamma_ = &store.create(name + ".weight", Mat::Ones(1, dim));
  beta_ = &store.create(name + ".bias", Mat::Zero(1, dim));
}

Var LayerNorm::operator()(Graph& g, Var x) const { return layer_norm(x, g.param(*gamma_), g.param(*beta_)); }

Mlp2::Mlp2(ParameterStore& store, const std::string& name, int in, int hidden, int out, Rng& rng)
    : first_(store, name + ".0", in, hidden, rng), second_(store, name + ".1", hidden, out, rng) {}

Var Mlp2::operator()(Graph& g, Var x) const { return second_(g, relu(first_(g, x))); }

}  // namespace hsnorm::nn
