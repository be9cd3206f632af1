#include "hsnorm/nn/adam.hpp"

#include <cmath>

namespace hsnorm::nn {

void Adam::step(ParameterStore& params, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params.all()) {
    auto [it, fresh] = state_.try_emplace(p->name);
    AdamState& s = it->second;
    if (fresh || s.m.rows() != p->value.rows() || s.m.cols() != p->value.cols()) {
      s.m = Mat::Zero(p->value.rows(), p->value.cols());
      s.v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    s.m = (beta1_ * s.m + (1.0 - beta1_) * p->grad).cast<float>().cast<double>();
    s.v = (beta2_ * s.v + (1.0 - beta2_) * p->grad.cwiseAbs2()).cast<float>().cast<double>();
    const auto m_hat = s.m.array() / c1;
    const auto v_hat = s.v.array() / c2;
    p->value.array() -= lr * m_hat / (v_hat.sqrt() + eps_);
    p->value = p->value.cast<float>().cast<double>();
  }
}

}  // namespace hsnorm::nn
