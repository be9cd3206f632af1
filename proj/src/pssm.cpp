#include "hsnorm/pssm.hpp"

#include <cmath>

namespace hsnorm {

using nn::Graph;
using nn::Mat;
using nn::Var;

SsmParameters discretize(const MatX& a, const MatX& b, const MatX& c, double delta) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != c.rows() || a.cols() != c.cols()) {
    fail(ErrorKind::shape, "discretize: A, B, C must share an E x S shape");
  }
  SsmParameters p;
  p.a_bar = (delta * a.array()).exp().matrix();
  p.b_bar = delta * b;
  p.c = c;
  return p;
}

MatX ssm_scan(const SsmParameters& params, const MatX& x) {
  if (params.selective()) {
    Graph g(false);
    const Eigen::Index e = params.a.cols() ? params.a.rows() : 0;
    Var y = nn::selective_scan(g.constant(x), g.constant(params.delta), g.constant(params.a),
                               g.constant(params.b_tokens), g.constant(params.c_tokens),
                               g.constant(Mat::Zero(1, e)));
    return y.value();
  }
  const Eigen::Index e = params.a_bar.rows();
  if (x.cols() != e || params.b_bar.rows() != e || params.c.rows() != e) {
    fail(ErrorKind::shape, "ssm_scan: channel count mismatch");
  }
  MatX h = MatX::Zero(e, params.a_bar.cols());
  MatX y(x.rows(), e);
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    h = params.a_bar.cwiseProduct(h) + params.b_bar.cwiseProduct(x.row(t).transpose().replicate(1, h.cols()));
    y.row(t) = h.cwiseProduct(params.c).rowwise().sum().transpose();
  }
  return y;
}

MatX ssm_kernel(const SsmParameters& params, Eigen::Index length) {
  if (params.selective()) {
    fail(ErrorKind::unsupported, "the convolutional form needs token-invariant parameters; use ssm_scan");
  }
  const Eigen::Index e = params.a_bar.rows();
  MatX k(length, e);
  MatX power = MatX::Ones(e, params.a_bar.cols());  // a_bar^t, element-wise for a diagonal transition
  for (Eigen::Index t = 0; t < length; ++t) {
    k.row(t) = params.c.cwiseProduct(power).cwiseProduct(params.b_bar).rowwise().sum().transpose();
    power = power.cwiseProduct(params.a_bar);
  }
  return k;
}

MatX ssm_conv(const SsmParameters& params, const MatX& x) {
  const MatX k = ssm_kernel(params, x.rows());
  if (x.cols() != k.cols()) fail(ErrorKind::shape, "ssm_conv: channel count mismatch");
  MatX y = MatX::Zero(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    for (Eigen::Index j = 0; j <= t; ++j) y.row(t).array() += k.row(j).array() * x.row(t - j).array();
  }
  return y;
}

Tokenizer::Tokenizer(nn::ParameterStore& store, const std::string& name, int c_g, int c_c, int hidden, int out,
                     nn::Rng& rng) {
  // The first layer acts on [G_i : C_ij]; its weight is stored split by input
  // block so the G half is evaluated once per point instead of once per neighbour.
  from_g_ = nn::Linear(store, name + ".in_g", c_g, hidden, rng, false);
  from_c_ = nn::Linear(store, name + ".in_c", c_c, hidden, rng, true);
  residual_ = nn::Linear(store, name + ".residual", hidden, hidden, rng);
  output_ = nn::Linear(store, name + ".output", hidden, out, rng);
}

Var Tokenizer::operator()(Graph& g, Var fused_g, Var local_c, int k) const {
  if (k < 1 || local_c.rows() != fused_g.rows() * k) {
    fail(ErrorKind::shape, "tokenize: local code has " + std::to_string(local_c.rows()) + " rows, expected " +
                               std::to_string(fused_g.rows()) + " x " + std::to_string(k));
  }
  Var h0 = nn::relu(nn::add(nn::repeat_interleave_rows(from_g_(g, fused_g), k), from_c_(g, local_c)));
  Var h1 = nn::add(h0, nn::relu(residual_(g, h0)));
  return nn::group_max(output_(g, h1), k);
}

MambaBlock::MambaBlock(nn::ParameterStore& store, const std::string& name, const PssmConfig& cfg, nn::Rng& rng) {
  const int e = cfg.encoding_dim;
  inner_ = cfg.expand * e;
  const int s = cfg.state_dim;
  const int rank = cfg.dt_rank > 0 ? cfg.dt_rank : (e + 15) / 16;

  norm_ = nn::LayerNorm(store, name + ".norm", e);
  in_x_ = nn::Linear(store, name + ".in_x", e, inner_, rng, false);
  in_z_ = nn::Linear(store, name + ".in_z", e, inner_, rng, false);
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(cfg.conv_width));
  conv_w_ = &store.create(name + ".conv.weight", nn::uniform_init(cfg.conv_width, inner_, conv_bound, rng));
  conv_b_ = &store.create(name + ".conv.bias", nn::uniform_init(1, inner_, conv_bound, rng));
  x_dt_ = nn::Linear(store, name + ".x_dt", inner_, rank, rng, false);
  x_b_ = nn::Linear(store, name + ".x_b", inner_, s, rng, false);
  x_c_ = nn::Linear(store, name + ".x_c", inner_, s, rng, false);
  dt_proj_ = nn::Linear(store, name + ".dt_proj", rank, inner_, rng, true);

  // Step sizes start log-uniform in [1e-3, 1e-1]: bias = softplus^{-1}(dt).
  std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
  Mat& bias = dt_proj_.bias()->value;
  for (Eigen::Index i = 0; i < bias.cols(); ++i) {
    const double dt = std::exp(u(rng));
    bias(0, i) = dt + std::log(-std::expm1(-dt));
  }
  Mat a_log(inner_, s);
  for (int j = 0; j < s; ++j) a_log.col(j).setConstant(std::log(static_cast<double>(j + 1)));
  a_log_ = &store.create(name + ".a_log", a_log);
  d_skip_ = &store.create(name + ".d", Mat::Ones(1, inner_));

  out_ = nn::Linear(store, name + ".out", inner_, e, rng, false);
  if (cfg.zero_init_output) out_.weight().value.setZero();
}

Var MambaBlock::operator()(Graph& g, Var tokens) const {
  Var xn = norm_(g, tokens);
  Var xs = nn::silu(nn::causal_depthwise_conv(in_x_(g, xn), g.param(*conv_w_), g.param(*conv_b_)));
  Var gate = nn::silu(in_z_(g, xn));
  Var delta = nn::softplus(dt_proj_(g, x_dt_(g, xs)));
  Var a = nn::scale(nn::exp(g.param(*a_log_)), -1.0);
  Var y = nn::selective_scan(xs, delta, a, x_b_(g, xs), x_c_(g, xs), g.param(*d_skip_));
  return nn::add(tokens, out_(g, nn::mul(y, gate)));
}

ResidualMlpBlock::ResidualMlpBlock(nn::ParameterStore& store, const std::string& name, const PssmConfig& cfg,
                                   nn::Rng& rng) {
  const int e = cfg.encoding_dim;
  norm_ = nn::LayerNorm(store, name + ".norm", e);
  hidden_ = nn::Linear(store, name + ".hidden", e, cfg.expand * e, rng);
  out_ = nn::Linear(store, name + ".out", cfg.expand * e, e, rng, false);
  if (cfg.zero_init_output) out_.weight().value.setZero();
}

Var ResidualMlpBlock::operator()(Graph& g, Var tokens) const {
  return nn::add(tokens, out_(g, nn::relu(hidden_(g, norm_(g, tokens)))));
}

void validate_depth(int depth) {
  if (depth < 6 || depth > 8) {
    fail(ErrorKind::config, "block depth must be 6, 7 or 8, got " + std::to_string(depth));
  }
}

BlockChain::BlockChain(nn::ParameterStore& store, const PssmConfig& cfg, nn::Rng& rng) {
  validate_depth(cfg.depth);
  for (int l = 0; l < cfg.depth; ++l) {
    const std::string name = "pssm.block" + std::to_string(l);
    if (cfg.mamba) {
      mamba_.emplace_back(store, name, cfg, rng);
    } else {
      mlp_.emplace_back(store, name, cfg, rng);
    }
  }
}

Var BlockChain::operator()(Graph& g, Var tokens) const {
  Var t = tokens;
  for (const auto& b : mamba_) t = b(g, t);
  for (const auto& b : mlp_) t = b(g, t);
  return t;
}

MatX BlockChain::infer(const MatX& tokens) const {
  MatX t = tokens;
  auto step = [&t](const auto& block) {
    Graph g(false);
    Var out = block(g, g.constant(std::move(t)));
    t = out.value();
  };
  for (const auto& b : mamba_) step(b);
  for (const auto& b : mlp_) step(b);
  return t;
}

}  // namespace hsnorm
