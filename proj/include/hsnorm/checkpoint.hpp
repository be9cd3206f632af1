#pragma once

#include "hsnorm/config.hpp"
#include "hsnorm/nn/adam.hpp"

#include <filesystem>
#include <map>

namespace hsnorm {

// Archive layout: the 8-byte magic "HSNCKPT1", a little-endian uint64 header
// length, a JSON header (config, config hash, epoch, optimizer step count and
// the tensor index), then raw little-endian float32 blobs. Tensor offsets in
// the index count floats from the start of the blob section.
struct Checkpoint {
  TrainConfig config;
  std::string config_hash;
  int epoch = 0;  // number of completed epochs
  long long adam_steps = 0;
  std::map<std::string, MatX> params;
  std::map<std::string, nn::AdamState> adam;
};

void save_checkpoint(const std::filesystem::path& file, const TrainConfig& cfg, int epoch,
                     const nn::ParameterStore& params, const nn::Adam* adam);
Checkpoint read_checkpoint(const std::filesystem::path& file);

// Copies tensors into `params` (and `adam` when given). Names and shapes must
// match exactly.
void restore(const Checkpoint& ckpt, nn::ParameterStore& params, nn::Adam* adam);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch);

}  // namespace hsnorm
