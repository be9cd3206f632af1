#include "hsnorm/network.hpp"

namespace hsnorm {

using nn::Graph;
using nn::Var;

void validate(const ModelConfig& cfg) {
  const auto scales = hierarchy_scales(cfg.patch_size);
  if (cfg.encoder.k < 1 || cfg.encoder.k >= scales.back()) {
    fail(ErrorKind::config, "knn_k must satisfy 0 < k < patch_size / 4");
  }
  validate_depth(cfg.pssm.depth);
  for (int w : {cfg.encoder.width1, cfg.encoder.width2, cfg.encoder.c_g, cfg.encoder.c_c, cfg.encoder.dense_growth,
                cfg.pssm.encoding_dim, cfg.pssm.state_dim, cfg.pssm.conv_width, cfg.pssm.expand,
                cfg.pssm.token_hidden}) {
    if (w < 1) fail(ErrorKind::config, "model widths must be positive");
  }
  if (cfg.encoder.dense_layers < 0) fail(ErrorKind::config, "dense_layers must be >= 0");
  if (!(cfg.weight_floor > 0.0)) fail(ErrorKind::config, "weight_floor must be positive");
}

Network::Network(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  validate(cfg_);
  nn::Rng rng(seed);
  encoder_ = FeatureEncoder(store_, cfg_.encoder, rng);
  tokenizer_ = Tokenizer(store_, "tokenizer", cfg_.encoder.c_g, cfg_.encoder.c_c, cfg_.pssm.token_hidden,
                         cfg_.pssm.encoding_dim, rng);
  chain_ = BlockChain(store_, cfg_.pssm, rng);
  head_ = NormalHead(store_, "head", cfg_.pssm.encoding_dim, cfg_.weight_floor, rng);
  store_.round_to_float();
}

NetworkOutput Network::forward(Graph& g, const Points& coords) const {
  if (coords.rows() != cfg_.patch_size) {
    fail(ErrorKind::shape, "network expects " + std::to_string(cfg_.patch_size) + " patch rows, got " +
                               std::to_string(coords.rows()));
  }
  FeatureHierarchy h = encoder_(g, coords);
  NetworkOutput out;
  out.tokens = tokenizer_(g, h.fused_g, h.local_c, h.k);
  out.surface = chain_(g, out.tokens);
  out.weights = head_.point_weights(g, out.surface);
  out.normal = head_.predict_normal(g, out.surface, out.weights);
  return out;
}

Vec3 Network::predict(const Points& coords) const {
  Graph g(false);
  const auto out = forward(g, coords);
  return out.normal.value().row(0).transpose();
}

PatchLoss Network::loss(Graph& g, const NetworkOutput& out, const Points& coords, const Vec3& n_gt,
                        const LossWeights& weights, bool use_weight_loss) const {
  PatchLoss pl;
  Var l_sin = sin_loss(g, out.normal, n_gt);
  pl.report.l_sin = l_sin.value()(0, 0);
  Var total = nn::scale(l_sin, weights.sin);
  const Eigen::Index m = out.weights.rows();
  const WeightTargets t = weight_targets(coords.topRows(m), n_gt);
  pl.report.w_targets = t.w;
  pl.report.delta = t.delta;
  Var l_wt = weight_loss(g, out.weights, t.w);
  pl.report.l_wt = l_wt.value()(0, 0);
  if (use_weight_loss) total = nn::add(total, nn::scale(l_wt, weights.wt));
  pl.report.total = total.value()(0, 0);
  pl.total = total;
  return pl;
}

}  // namespace hsnorm
