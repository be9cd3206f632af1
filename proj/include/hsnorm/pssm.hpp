#pragma once

#include "hsnorm/nn/layers.hpp"

#include <vector>

namespace hsnorm {

// Diagonal state-space parameters for E independent channels of state size S.
//
// Time-invariant form: a_bar, b_bar, c are E x S and shared by every token.
// Selective form (delta non-empty): a is the continuous-time E x S matrix,
// delta is L x E, and b_tokens / c_tokens are L x S per-token maps; the
// transition is discretized per token as exp(delta * a) and delta * b.
struct SsmParameters {
  MatX a_bar, b_bar, c;
  MatX a, delta, b_tokens, c_tokens;
  int conv_kernel_width = 4;

  bool selective() const { return delta.size() != 0; }
  Eigen::Index channels() const { return selective() ? a.rows() : a_bar.rows(); }
  Eigen::Index state_size() const { return selective() ? a.cols() : a_bar.cols(); }
};

// Zero-order-hold style discretization with a scalar step:
// a_bar = exp(delta * a), b_bar = delta * b.
SsmParameters discretize(const MatX& a, const MatX& b, const MatX& c, double delta);

// Recurrent form h_t = a_bar h_{t-1} + b_bar x_t, y_t = c h_t with h_0 = 0.
// x and y are L x E.
MatX ssm_scan(const SsmParameters& params, const MatX& x);
// The equivalent causal convolution with kernel K_k = c a_bar^k b_bar.
// Selective parameters are rejected with ErrorKind::unsupported.
MatX ssm_conv(const SsmParameters& params, const MatX& x);
// Kernel taps, L x E.
MatX ssm_kernel(const SsmParameters& params, Eigen::Index length);

struct PssmConfig {
  int encoding_dim = 128;  // E
  int state_dim = 16;      // S
  int conv_width = 4;
  int expand = 2;
  int dt_rank = 0;  // 0 -> ceil(E / 16)
  int depth = 7;
  bool mamba = true;  // false swaps in per-token residual MLP blocks
  bool zero_init_output = true;
  int token_hidden = 128;  // width of the residual stack inside tokenization
};

// Serializes (G, C) into M tokens: [G_i : C_ij] -> residual stack -> output
// transform -> max over the k neighbours. G is M x C_G, C is (M*k) x C_C.
class Tokenizer {
 public:
  Tokenizer() = default;
  Tokenizer(nn::ParameterStore& store, const std::string& name, int c_g, int c_c, int hidden, int out,
            nn::Rng& rng);
  nn::Var operator()(nn::Graph& g, nn::Var fused_g, nn::Var local_c, int k) const;

 private:
  nn::Linear from_g_, from_c_, residual_, output_;
};

class MambaBlock {
 public:
  MambaBlock() = default;
  MambaBlock(nn::ParameterStore& store, const std::string& name, const PssmConfig& cfg, nn::Rng& rng);

  // T_l = out(SSM(silu(conv(in_x(LN T)))) * silu(in_z(LN T))) + T
  nn::Var operator()(nn::Graph& g, nn::Var tokens) const;

  const nn::Linear& output_layer() const { return out_; }

 private:
  int inner_ = 0;
  nn::LayerNorm norm_;
  nn::Linear in_x_, in_z_, x_dt_, x_b_, x_c_, dt_proj_, out_;
  nn::Parameter* conv_w_ = nullptr;
  nn::Parameter* conv_b_ = nullptr;
  nn::Parameter* a_log_ = nullptr;
  nn::Parameter* d_skip_ = nullptr;
};

// Per-token residual MLP used when the state-space blocks are disabled.
class ResidualMlpBlock {
 public:
  ResidualMlpBlock() = default;
  ResidualMlpBlock(nn::ParameterStore& store, const std::string& name, const PssmConfig& cfg, nn::Rng& rng);
  nn::Var operator()(nn::Graph& g, nn::Var tokens) const;

 private:
  nn::LayerNorm norm_;
  nn::Linear hidden_, out_;
};

void validate_depth(int depth);

class BlockChain {
 public:
  BlockChain() = default;
  BlockChain(nn::ParameterStore& store, const PssmConfig& cfg, nn::Rng& rng);

  nn::Var operator()(nn::Graph& g, nn::Var tokens) const;
  // Forward pass without a tape, dropping intermediates block by block.
  MatX infer(const MatX& tokens) const;

  int depth() const { return static_cast<int>(mamba_.empty() ? mlp_.size() : mamba_.size()); }
  const MambaBlock& block(int i) const { return mamba_.at(i); }

 private:
  std::vector<MambaBlock> mamba_;
  std::vector<ResidualMlpBlock> mlp_;
};

}  // namespace hsnorm
