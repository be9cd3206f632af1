#pragma once

#include "hsnorm/feature_encoder.hpp"
#include "hsnorm/normal_head.hpp"
#include "hsnorm/pssm.hpp"

#include <cstdint>

namespace hsnorm {

struct ModelConfig {
  int patch_size = 700;
  EncoderConfig encoder;
  PssmConfig pssm;
  double weight_floor = 0.01;
};

void validate(const ModelConfig& cfg);

struct NetworkOutput {
  nn::Var normal;    // 1 x 3 unit vector, aligned frame
  nn::Var weights;   // M x 1
  nn::Var surface;   // M x E
  nn::Var tokens;    // M x E
};

struct PatchLoss {
  nn::Var total;
  LossReport report;
};

// Encoder -> tokenizer -> block chain -> normal head, on one aligned patch.
class Network {
 public:
  Network(const ModelConfig& cfg, std::uint64_t seed);
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  NetworkOutput forward(nn::Graph& g, const Points& coords) const;
  // Convenience inference path: aligned-frame unit normal.
  Vec3 predict(const Points& coords) const;

  // Losses against a ground-truth normal given in the aligned frame. Weight
  // targets use the first M rows of `coords`.
  PatchLoss loss(nn::Graph& g, const NetworkOutput& out, const Points& coords, const Vec3& n_gt,
                 const LossWeights& weights, bool use_weight_loss) const;

  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const FeatureEncoder& encoder() const { return encoder_; }
  const BlockChain& chain() const { return chain_; }
  const NormalHead& head() const { return head_; }

 private:
  ModelConfig cfg_;
  nn::ParameterStore store_;
  FeatureEncoder encoder_;
  Tokenizer tokenizer_;
  BlockChain chain_;
  NormalHead head_;
};

}  // namespace hsnorm
