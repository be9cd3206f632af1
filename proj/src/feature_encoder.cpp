#include "hsnorm/feature_encoder.hpp"

#include "hsnorm/patch_geometry.hpp"

namespace hsnorm {

using nn::Graph;
using nn::Var;

std::string_view to_string(FusionMode m) {
  switch (m) {
    case FusionMode::attention: return "attention";
    case FusionMode::max: return "max";
    case FusionMode::attention_max: return "attention_max";
  }
  return "attention";
}

FusionMode fusion_mode_from_string(std::string_view s) {
  if (s == "attention") return FusionMode::attention;
  if (s == "max") return FusionMode::max;
  if (s == "attention_max") return FusionMode::attention_max;
  fail(ErrorKind::config, "unknown fusion mode '" + std::string(s) + "' (attention|max|attention_max)");
}

std::vector<int> hierarchy_scales(int patch_size) {
  if (patch_size < 4 || patch_size % 4 != 0) {
    fail(ErrorKind::config, "patch size must be a positive multiple of 4, got " + std::to_string(patch_size));
  }
  return {patch_size, patch_size / 2, patch_size / 4};
}

DenseBlock::DenseBlock(nn::ParameterStore& store, const std::string& name, int in, int growth, int layers,
                       int out, nn::Rng& rng) {
  int width = in;
  for (int l = 0; l < layers; ++l) {
    layers_.emplace_back(store, name + ".layer" + std::to_string(l), 2 * width, growth, rng);
    width += growth;
  }
  transition_ = nn::Linear(store, name + ".transition", width, out, rng);
}

Var DenseBlock::operator()(Graph& g, Var x, const NeighborTable& nbr) const {
  if (nbr.rows() != x.rows()) {
    fail(ErrorKind::shape, "dense block: " + std::to_string(x.rows()) + " rows but neighbour table has " +
                               std::to_string(nbr.rows()));
  }
  Var h = x;
  for (const auto& layer : layers_) {
    Var agg = nn::neighbor_max_diff(h, nbr);
    Var y = nn::relu(layer(g, nn::concat_cols({h, agg})));
    h = nn::concat_cols({h, y});
  }
  return nn::relu(transition_(g, h));
}

FusionStage::FusionStage(nn::ParameterStore& store, const std::string& name, int in, int out, FusionMode mode,
                         double lambda_init, nn::Rng& rng)
    : mode_(mode) {
  if (mode != FusionMode::max) {
    q_ = nn::Linear(store, name + ".q", in, in, rng);
    v_ = nn::Linear(store, name + ".v", in, in, rng);
    psi_ = nn::Linear(store, name + ".psi", in, in, rng);
  }
  if (mode == FusionMode::attention) {
    lambda_ = &store.create(name + ".lambda", nn::Mat::Constant(1, 1, lambda_init));
  }
  theta_ = nn::Linear(store, name + ".theta", 2 * in, out, rng);
}

AttentionState FusionStage::attention_scores(Graph& g, Var f) const {
  if (mode_ == FusionMode::max) fail(ErrorKind::unsupported, "max fusion has no attention state");
  AttentionState s;
  s.q = q_(g, f);
  s.v = v_(g, f);
  s.a = nn::row_mean(nn::softmax_rows_per_col(s.q));
  s.lambda = lambda_ ? g.param(*lambda_) : g.constant(nn::Mat::Ones(1, 1));
  return s;
}

Var FusionStage::weighted_global(Graph& g, const AttentionState& state) const {
  Var pooled = nn::matmul(nn::transpose(state.a), state.v);  // 1 x D
  return nn::mul_scalar(psi_(g, pooled), state.lambda);
}

Var FusionStage::max_global(Graph&, Var f) const { return nn::col_max(f); }

Var FusionStage::attention_max_global(Graph& g, Var f) const {
  Var q = q_(g, f);
  Var v = v_(g, f);
  Var a = nn::row_max(nn::softmax_rows_per_col(q));
  return psi_(g, nn::matmul(nn::transpose(a), v));
}

Var FusionStage::global_vector(Graph& g, Var f) const {
  switch (mode_) {
    case FusionMode::attention: return weighted_global(g, attention_scores(g, f));
    case FusionMode::max: return max_global(g, f);
    case FusionMode::attention_max: return attention_max_global(g, f);
  }
  return max_global(g, f);
}

Var FusionStage::fuse(Graph& g, Var global, Var f, Eigen::Index next_rows) const {
  if (next_rows < 1 || next_rows > f.rows()) {
    fail(ErrorKind::shape, "fusion: next scale " + std::to_string(next_rows) + " exceeds " +
                               std::to_string(f.rows()) + " rows");
  }
  if (global.rows() != 1 || global.cols() != f.cols()) fail(ErrorKind::shape, "fusion: global vector width mismatch");
  Var slice = nn::slice_rows(f, 0, next_rows);
  return nn::relu(theta_(g, nn::concat_cols({nn::repeat_rows(global, next_rows), slice})));
}

Var FusionStage::operator()(Graph& g, Var f, Eigen::Index next_rows) const {
  return fuse(g, global_vector(g, f), f, next_rows);
}

LocalCode::LocalCode(nn::ParameterStore& store, const std::string& name, int width, nn::Rng& rng)
    : embed_(store, name + ".embed", 4, width, rng) {}

MatX LocalCode::displacements(const Points& coords, const NeighborTable& nbr) {
  const Eigen::Index m = nbr.rows(), k = nbr.cols();
  MatX out(m * k, 4);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::RowVector3d d = coords.row(nbr(i, j)) - coords.row(i);
      out.row(i * k + j) << d, d.norm();
    }
  }
  return out;
}

Var LocalCode::operator()(Graph& g, const Points& coords, const NeighborTable& nbr) const {
  return nn::relu(embed_(g, g.constant(displacements(coords, nbr))));
}

FeatureEncoder::FeatureEncoder(nn::ParameterStore& store, const EncoderConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
  block1_ = DenseBlock(store, "encoder.dense1", 3, cfg.dense_growth, cfg.dense_layers, cfg.width1, rng);
  stages_.emplace_back(store, "encoder.fusion1", cfg.width1, cfg.width2, cfg.fusion, cfg.lambda_init, rng);
  block2_ = DenseBlock(store, "encoder.dense2", cfg.width2, cfg.dense_growth, cfg.dense_layers, cfg.width2, rng);
  stages_.emplace_back(store, "encoder.fusion2", cfg.width2, cfg.c_g, cfg.fusion, cfg.lambda_init, rng);
  local_ = LocalCode(store, "encoder.local", cfg.c_c, rng);
}

FeatureHierarchy FeatureEncoder::operator()(Graph& g, const Points& coords) const {
  FeatureHierarchy out;
  out.scales = hierarchy_scales(static_cast<int>(coords.rows()));
  out.k = cfg_.k;
  const int n2 = out.scales[1], m = out.scales[2];

  const Points c1 = coords;
  const Points c2 = coords.topRows(n2);
  const Points c3 = coords.topRows(m);

  Var f1 = block1_(g, g.constant(c1), knn_indices(c1, cfg_.k));
  Var f2_in = stages_[0](g, f1, n2);
  Var f2 = block2_(g, f2_in, knn_indices(c2, cfg_.k));
  out.fused_g = stages_[1](g, f2, m);
  out.features = {f1, f2, out.fused_g};

  out.final_neighbors = knn_indices(c3, cfg_.k);
  out.local_c = local_(g, c3, out.final_neighbors);
  return out;
}

}  // namespace hsnorm
