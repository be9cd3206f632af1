#pragma once

#include "hsnorm/nn/layers.hpp"

#include <vector>

namespace hsnorm {

enum class FusionMode {
  attention,  // attention-weighted mean of softmax scores, gated by a learnable scale
  max,        // plain point-wise max of the features
  attention_max,    // softmax scores max-pooled over channels, no gate
};

std::string_view to_string(FusionMode m);
FusionMode fusion_mode_from_string(std::string_view s);

struct EncoderConfig {
  int k = 16;             // neighbourhood size for dense-block aggregation and the local code
  int width1 = 64;        // feature width at the full scale
  int width2 = 128;       // feature width at the half scale
  int c_g = 128;          // width of the fused code G
  int c_c = 64;           // width of the local code C
  int dense_growth = 32;
  int dense_layers = 2;
  FusionMode fusion = FusionMode::attention;
  double lambda_init = 0.1;
};

// Scale sizes used by the encoder: [N, N/2, N/4]. Requires N divisible by 4.
std::vector<int> hierarchy_scales(int patch_size);

// Densely connected per-point layers. Each layer sees the concatenation of all
// previous outputs together with its neighbourhood max of (x_j - x_i), and the
// block ends in a ReLU transition to the output width.
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(nn::ParameterStore& store, const std::string& name, int in, int growth, int layers, int out,
             nn::Rng& rng);
  nn::Var operator()(nn::Graph& g, nn::Var x, const NeighborTable& nbr) const;
  int out() const { return transition_.out(); }

 private:
  std::vector<nn::Linear> layers_;
  nn::Linear transition_;
};

struct AttentionState {
  nn::Var q;       // N_s x D
  nn::Var v;       // N_s x D
  nn::Var a;       // N_s x 1, sums to 1
  nn::Var lambda;  // 1 x 1 gate
};

// One fusion step from scale s to scale s+1: a global vector is computed from
// F_s, duplicated next to each of the first N_{s+1} rows of F_s, and mapped by
// Theta (linear + ReLU) to the next width.
class FusionStage {
 public:
  FusionStage() = default;
  FusionStage(nn::ParameterStore& store, const std::string& name, int in, int out, FusionMode mode,
              double lambda_init, nn::Rng& rng);

  AttentionState attention_scores(nn::Graph& g, nn::Var f) const;
  // Psi(v^T a) * lambda
  nn::Var weighted_global(nn::Graph& g, const AttentionState& state) const;
  // Point-wise max over rows of F_s.
  nn::Var max_global(nn::Graph& g, nn::Var f) const;
  // Psi(v^T max_d softmax(q_d)): channel max-pooled attention weights.
  nn::Var attention_max_global(nn::Graph& g, nn::Var f) const;
  nn::Var global_vector(nn::Graph& g, nn::Var f) const;

  nn::Var fuse(nn::Graph& g, nn::Var global, nn::Var f, Eigen::Index next_rows) const;
  nn::Var operator()(nn::Graph& g, nn::Var f, Eigen::Index next_rows) const;

  FusionMode mode() const { return mode_; }
  const nn::Linear& q() const { return q_; }
  const nn::Linear& v() const { return v_; }
  const nn::Linear& psi() const { return psi_; }
  const nn::Linear& theta() const { return theta_; }
  nn::Parameter* lambda() const { return lambda_; }

 private:
  FusionMode mode_ = FusionMode::attention;
  nn::Linear q_, v_, psi_, theta_;
  nn::Parameter* lambda_ = nullptr;
};

// Relative-position code of each point and its k neighbours: rows i*k + j hold
// an embedding of (p_nbr - p_i, |p_nbr - p_i|).
class LocalCode {
 public:
  LocalCode() = default;
  LocalCode(nn::ParameterStore& store, const std::string& name, int width, nn::Rng& rng);

  // Raw (M*k) x 4 displacement features, before embedding.
  static MatX displacements(const Points& coords, const NeighborTable& nbr);
  nn::Var operator()(nn::Graph& g, const Points& coords, const NeighborTable& nbr) const;

 private:
  nn::Linear embed_;
};

struct FeatureHierarchy {
  std::vector<int> scales;
  std::vector<nn::Var> features;     // F_1 .. F_S
  nn::Var fused_g;                   // M x C_G
  nn::Var local_c;                   // (M*k) x C_C
  NeighborTable final_neighbors;     // M x k
  int k = 0;
};

class FeatureEncoder {
 public:
  FeatureEncoder() = default;
  FeatureEncoder(nn::ParameterStore& store, const EncoderConfig& cfg, nn::Rng& rng);

  // `coords` is an aligned patch, rows ordered by distance to the query.
  FeatureHierarchy operator()(nn::Graph& g, const Points& coords) const;

  const EncoderConfig& config() const { return cfg_; }
  const FusionStage& stage(int i) const { return stages_[i]; }

 private:
  EncoderConfig cfg_;
  DenseBlock block1_, block2_;
  std::vector<FusionStage> stages_;
  LocalCode local_;
};

}  // namespace hsnorm
