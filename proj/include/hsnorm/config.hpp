#pragma once

#include "hsnorm/network.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace hsnorm {

struct TrainConfig {
  int patch_size = 700;
  int epochs = 900;
  int batch_size = 100;
  double lr = 5e-4;
  std::vector<int> lr_milestones{200, 400, 600, 800};
  double lr_factor = 0.2;
  int depth = 7;
  bool attention_enabled = true;  // false: plain max fusion
  bool mamba_enabled = true;      // false: residual MLP blocks
  bool use_wt_loss = true;
  bool use_cnd = false;
  FusionMode fusion_mode = FusionMode::attention;  // used while attention_enabled
  std::uint64_t seed = 0;
  int patches_per_shape = 1000;
  int checkpoint_every = 100;  // epochs; the final epoch is always saved
  bool augment_rotation = true;

  int knn_k = 16;
  int width1 = 64;
  int width2 = 128;
  int c_g = 128;
  int c_c = 64;
  int dense_growth = 32;
  int dense_layers = 2;
  double lambda_init = 0.1;
  int encoding_dim = 128;
  int state_dim = 16;
  int conv_width = 4;
  int expand = 2;
  int token_hidden = 128;
  double weight_floor = 0.01;
  double gamma_sin = 0.1;
  double gamma_wt = 1.0;
};

struct ConfigKey {
  std::string name;
  std::string type;  // int | float | bool | string | int_list
  std::string help;
};

// Every recognised key, in declaration order.
const std::vector<ConfigKey>& config_schema();
bool is_config_key(const std::string& key);

// Type-checked assignment from text; unknown keys and malformed values raise
// ErrorKind::config.
void set_value(TrainConfig& cfg, const std::string& key, const std::string& value);
std::string get_value(const TrainConfig& cfg, const std::string& key);

// Flat `key = value` file: `#` comments, blank lines, optional quotes around
// strings, lists as `[a, b]`. Keys not in the schema are rejected.
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& file);
TrainConfig load_config(const std::filesystem::path& file);
// `key=value` strings, applied in order.
void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides);

void validate(const TrainConfig& cfg);

std::string to_text(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);
// Hex digest of the canonical JSON form.
std::string config_hash(const TrainConfig& cfg);

FusionMode effective_fusion(const TrainConfig& cfg);
ModelConfig model_config(const TrainConfig& cfg);
LossWeights loss_weights(const TrainConfig& cfg);

// Step schedule on 0-based epochs: lr * factor^(number of milestones <= epoch).
double lr_for_epoch(const TrainConfig& cfg, int epoch);

}  // namespace hsnorm
