#pragma once

#include "hsnorm/nn/ops.hpp"

#include <random>
#include <string>

namespace hsnorm::nn {

using Rng = std::mt19937_64;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for dense layers.
Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng, bool bias = true);

  Var operator()(Graph& g, Var x) const;
  int in() const { return in_; }
  int out() const { return out_; }
  Parameter& weight() const { return *w_; }
  Parameter* bias() const { return b_; }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  int in_ = 0, out_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int dim);
  Var operator()(Graph& g, Var x) const;

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
};

// Linear -> ReLU -> Linear, applied per row.
class Mlp2 {
 public:
  Mlp2() = default;
  Mlp2(ParameterStore& store, const std::string& name, int in, int hidden, int out, Rng& rng);
  Var operator()(Graph& g, Var x) const;

 private:
  Linear first_, second_;
};

}  // namespace hsnorm::nn
