#pragma once

#include "hsnorm/nn/graph.hpp"

#include <map>
#include <string>

namespace hsnorm::nn {

struct AdamState {
  Mat m;
  Mat v;
};

// Adam with bias correction. Parameters and moments are kept at single
// precision after every step so a checkpoint round-trip is exact.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParameterStore& params, double lr);

  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }
  std::map<std::string, AdamState>& state() { return state_; }
  const std::map<std::string, AdamState>& state() const { return state_; }

 private:
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::map<std::string, AdamState> state_;
};

}  // namespace hsnorm::nn
