#include "hsnorm/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace hsnorm {

namespace {

struct Field {
  ConfigKey key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& type, const std::string& value) {
  fail(ErrorKind::config, "key '" + key + "' expects " + type + ", got '" + value + "'");
}

template <class T>
T parse_number(const std::string& key, const std::string& text, const char* type) {
  const std::string s = trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) bad_value(key, type, text);
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(key, "bool", text);
}

std::string unquote(const std::string& text) {
  std::string s = trim(text);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::string s = trim(text);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') bad_value(key, "int list", text);
    s = s.substr(1, s.size() - 2);
  }
  std::vector<int> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, item, "int list"));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  std::string s(buf, ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

template <class M>
Field int_field(const char* name, M TrainConfig::*member, const char* help) {
  return {{name, "int", help},
          [member](const TrainConfig& c) { return std::to_string(c.*member); },
          [member, name](TrainConfig& c, const std::string& v) { c.*member = parse_number<M>(name, v, "int"); }};
}

Field float_field(const char* name, double TrainConfig::*member, const char* help) {
  return {{name, "float", help},
          [member](const TrainConfig& c) { return format_double(c.*member); },
          [member, name](TrainConfig& c, const std::string& v) { c.*member = parse_number<double>(name, v, "float"); }};
}

Field bool_field(const char* name, bool TrainConfig::*member, const char* help) {
  return {{name, "bool", help},
          [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member, name](TrainConfig& c, const std::string& v) { c.*member = parse_bool(name, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(int_field("patch_size", &TrainConfig::patch_size, "points per patch N (multiple of 4)"));
    f.push_back(int_field("epochs", &TrainConfig::epochs, "training epochs"));
    f.push_back(int_field("batch_size", &TrainConfig::batch_size, "patches per optimizer step"));
    f.push_back(float_field("lr", &TrainConfig::lr, "initial Adam learning rate"));
    f.push_back({{"lr_milestones", "int_list", "0-based epochs at which the rate is multiplied by lr_factor"},
                 [](const TrainConfig& c) {
                   std::string s = "[";
                   for (std::size_t i = 0; i < c.lr_milestones.size(); ++i) {
                     if (i) s += ", ";
                     s += std::to_string(c.lr_milestones[i]);
                   }
                   return s + "]";
                 },
                 [](TrainConfig& c, const std::string& v) { c.lr_milestones = parse_int_list("lr_milestones", v); }});
    f.push_back(float_field("lr_factor", &TrainConfig::lr_factor, "learning-rate decay factor"));
    f.push_back(int_field("depth", &TrainConfig::depth, "number of sequence blocks (6..8)"));
    f.push_back(bool_field("attention_enabled", &TrainConfig::attention_enabled, "attention fusion; false uses max fusion"));
    f.push_back(bool_field("mamba_enabled", &TrainConfig::mamba_enabled, "state-space blocks; false uses residual MLPs"));
    f.push_back(bool_field("use_wt_loss", &TrainConfig::use_wt_loss, "add the point-weight loss"));
    f.push_back(bool_field("use_cnd", &TrainConfig::use_cnd, "supervise with the nearest clean normal"));
    f.push_back({{"fusion_mode", "string", "attention | max | attention_max (when attention_enabled)"},
                 [](const TrainConfig& c) { return std::string(to_string(c.fusion_mode)); },
                 [](TrainConfig& c, const std::string& v) { c.fusion_mode = fusion_mode_from_string(unquote(v)); }});
    f.push_back(int_field("seed", &TrainConfig::seed, "master random seed"));
    f.push_back(int_field("patches_per_shape", &TrainConfig::patches_per_shape, "patches drawn per shape per epoch"));
    f.push_back(int_field("checkpoint_every", &TrainConfig::checkpoint_every, "epochs between checkpoints"));
    f.push_back(bool_field("augment_rotation", &TrainConfig::augment_rotation, "random rotation before alignment"));
    f.push_back(int_field("knn_k", &TrainConfig::knn_k, "neighbourhood size k"));
    f.push_back(int_field("width1", &TrainConfig::width1, "encoder width at full scale"));
    f.push_back(int_field("width2", &TrainConfig::width2, "encoder width at half scale"));
    f.push_back(int_field("c_g", &TrainConfig::c_g, "width of the fused code G"));
    f.push_back(int_field("c_c", &TrainConfig::c_c, "width of the local code C"));
    f.push_back(int_field("dense_growth", &TrainConfig::dense_growth, "dense block growth rate"));
    f.push_back(int_field("dense_layers", &TrainConfig::dense_layers, "layers per dense block"));
    f.push_back(float_field("lambda_init", &TrainConfig::lambda_init, "initial attention gate"));
    f.push_back(int_field("encoding_dim", &TrainConfig::encoding_dim, "token width E"));
    f.push_back(int_field("state_dim", &TrainConfig::state_dim, "state size S"));
    f.push_back(int_field("conv_width", &TrainConfig::conv_width, "depthwise convolution width"));
    f.push_back(int_field("expand", &TrainConfig::expand, "inner expansion factor"));
    f.push_back(int_field("token_hidden", &TrainConfig::token_hidden, "tokenizer hidden width"));
    f.push_back(float_field("weight_floor", &TrainConfig::weight_floor, "constant c added to point weights"));
    f.push_back(float_field("gamma_sin", &TrainConfig::gamma_sin, "sine loss weight"));
    f.push_back(float_field("gamma_wt", &TrainConfig::gamma_wt, "weight loss weight"));
    return f;
  }();
  return table;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key.name == key) return f;
  }
  fail(ErrorKind::config, "unknown config key '" + key + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

bool is_config_key(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key.name == key) return true;
  }
  return false;
}

void set_value(TrainConfig& cfg, const std::string& key, const std::string& value) { field(key).set(cfg, value); }

std::string get_value(const TrainConfig& cfg, const std::string& key) { return field(key).get(cfg); }

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::config, "cannot open config file " + file.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = file.string() + ":" + std::to_string(lineno) + ": ";
    std::string body = line;
    // Strip comments outside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '"') quoted = !quoted;
      if (body[i] == '#' && !quoted) {
        body.resize(i);
        break;
      }
    }
    body = trim(body);
    if (body.empty()) continue;
    if (body.front() == '[') fail(ErrorKind::config, where + "sections are not supported in flat configs");
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, where + "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    try {
      set_value(cfg, key, body.substr(eq + 1));
    } catch (const Error& e) {
      fail(ErrorKind::config, where + e.what());
    }
  }
}

TrainConfig load_config(const std::filesystem::path& file) {
  TrainConfig cfg;
  apply_config_file(cfg, file);
  return cfg;
}

void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, "override '" + o + "' is not key=value");
    set_value(cfg, trim(std::string_view(o).substr(0, eq)), o.substr(eq + 1));
  }
}

void validate(const TrainConfig& cfg) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::config, msg);
  };
  require(cfg.epochs >= 1, "epochs must be >= 1");
  require(cfg.batch_size >= 1, "batch_size must be >= 1");
  require(cfg.lr > 0.0, "lr must be positive");
  require(cfg.lr_factor > 0.0 && cfg.lr_factor < 1.0, "lr_factor must lie in (0, 1)");
  for (std::size_t i = 0; i < cfg.lr_milestones.size(); ++i) {
    const int m = cfg.lr_milestones[i];
    require(m > 0, "lr_milestones must be positive");
    require(m < cfg.epochs, "lr_milestones must be below epochs (" + std::to_string(m) +
                                " >= " + std::to_string(cfg.epochs) + ")");
    require(i == 0 || m > cfg.lr_milestones[i - 1], "lr_milestones must be strictly increasing");
  }
  require(cfg.patches_per_shape >= 1, "patches_per_shape must be >= 1");
  require(cfg.checkpoint_every >= 1, "checkpoint_every must be >= 1");
  require(cfg.gamma_sin >= 0.0 && cfg.gamma_wt >= 0.0, "loss weights must be non-negative");
  validate(model_config(cfg));
}

std::string to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    std::string v = f.get(cfg);
    if (f.key.type == "string") v = "\"" + v + "\"";
    out += f.key.name + " = " + v + "\n";
  }
  return out;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : fields()) {
    const std::string v = f.get(cfg);
    if (f.key.type == "int") {
      j[f.key.name] = nlohmann::json::parse(v);
    } else if (f.key.type == "float") {
      j[f.key.name] = std::stod(v);
    } else if (f.key.type == "bool") {
      j[f.key.name] = (v == "true");
    } else if (f.key.type == "int_list") {
      j[f.key.name] = cfg.lr_milestones;
    } else {
      j[f.key.name] = v;
    }
  }
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::config, "config JSON must be an object");
  TrainConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (value.is_string()) {
      set_value(cfg, key, value.get<std::string>());
    } else {
      set_value(cfg, key, value.dump());
    }
  }
  return cfg;
}

std::string config_hash(const TrainConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash_string(to_json(cfg).dump())));
  return buf;
}

FusionMode effective_fusion(const TrainConfig& cfg) {
  return cfg.attention_enabled ? cfg.fusion_mode : FusionMode::max;
}

ModelConfig model_config(const TrainConfig& cfg) {
  ModelConfig m;
  m.patch_size = cfg.patch_size;
  m.encoder.k = cfg.knn_k;
  m.encoder.width1 = cfg.width1;
  m.encoder.width2 = cfg.width2;
  m.encoder.c_g = cfg.c_g;
  m.encoder.c_c = cfg.c_c;
  m.encoder.dense_growth = cfg.dense_growth;
  m.encoder.dense_layers = cfg.dense_layers;
  m.encoder.fusion = effective_fusion(cfg);
  m.encoder.lambda_init = cfg.lambda_init;
  m.pssm.encoding_dim = cfg.encoding_dim;
  m.pssm.state_dim = cfg.state_dim;
  m.pssm.conv_width = cfg.conv_width;
  m.pssm.expand = cfg.expand;
  m.pssm.depth = cfg.depth;
  m.pssm.mamba = cfg.mamba_enabled;
  m.pssm.token_hidden = cfg.token_hidden;
  m.weight_floor = cfg.weight_floor;
  return m;
}

LossWeights loss_weights(const TrainConfig& cfg) { return {cfg.gamma_sin, cfg.gamma_wt}; }

double lr_for_epoch(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (int m : cfg.lr_milestones) {
    if (m <= epoch) lr *= cfg.lr_factor;
  }
  return lr;
}

}  // namespace hsnorm
