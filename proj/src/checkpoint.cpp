#include "hsnorm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hsnorm {

namespace {

constexpr char kMagic[8] = {'H', 'S', 'N', 'C', 'K', 'P', 'T', '1'};

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

void put_floats(std::string& out, const MatX& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const std::uint32_t bits = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i])));
    char b[4];
    std::memcpy(b, &bits, 4);
    out.append(b, 4);
  }
}

MatX get_floats(const std::string& blob, std::uint64_t offset, Eigen::Index rows, Eigen::Index cols,
                const std::string& what) {
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
  if ((offset + count) * 4 > blob.size()) fail(ErrorKind::parse, "checkpoint tensor '" + what + "' out of range");
  MatX m(rows, cols);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, blob.data() + (offset + i) * 4, 4);
    m.data()[i] = static_cast<double>(std::bit_cast<float>(to_le(bits)));
  }
  return m;
}

nlohmann::json tensor_entry(const std::string& name, const MatX& m, std::uint64_t offset) {
  return {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}};
}

}  // namespace

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch) {
  return dir / ("ckpt_" + std::to_string(epoch) + ".ckpt");
}

void save_checkpoint(const std::filesystem::path& file, const TrainConfig& cfg, int epoch,
                     const nn::ParameterStore& params, const nn::Adam* adam) {
  std::string blob;
  nlohmann::json index = nlohmann::json::array();
  nlohmann::json moments = nlohmann::json::array();
  for (const nn::Parameter* p : params.all()) {
    index.push_back(tensor_entry(p->name, p->value, blob.size() / 4));
    put_floats(blob, p->value);
  }
  if (adam) {
    for (const auto& [name, st] : adam->state()) {
      nlohmann::json e = {{"name", name}, {"rows", st.m.rows()}, {"cols", st.m.cols()}};
      e["m_offset"] = blob.size() / 4;
      put_floats(blob, st.m);
      e["v_offset"] = blob.size() / 4;
      put_floats(blob, st.v);
      moments.push_back(std::move(e));
    }
  }
  nlohmann::json header = {{"format", 1},
                           {"config", to_json(cfg)},
                           {"config_hash", config_hash(cfg)},
                           {"epoch", epoch},
                           {"adam_steps", adam ? adam->steps() : 0},
                           {"params", index},
                           {"adam", moments},
                           {"blob_floats", blob.size() / 4}};
  const std::string text = header.dump();

  std::string out(kMagic, 8);
  put_u64(out, text.size());
  out += text;
  out += blob;

  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  const std::filesystem::path tmp = file.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::io, "cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) fail(ErrorKind::io, "short write on checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

Checkpoint read_checkpoint(const std::filesystem::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open checkpoint " + file.string());
  const std::string data{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  if (data.size() < 16 || std::memcmp(data.data(), kMagic, 8) != 0) {
    fail(ErrorKind::parse, file.string() + " is not a checkpoint archive");
  }
  const std::uint64_t header_len = get_u64(data.data() + 8);
  if (16 + header_len > data.size()) fail(ErrorKind::parse, file.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, file.string() + ": bad header: " + e.what());
  }
  const std::string blob = data.substr(16 + header_len);

  Checkpoint ck;
  try {
    if (header.at("format").get<int>() != 1) fail(ErrorKind::unsupported, "unknown checkpoint format");
    ck.config = config_from_json(header.at("config"));
    ck.config_hash = header.at("config_hash").get<std::string>();
    ck.epoch = header.at("epoch").get<int>();
    ck.adam_steps = header.at("adam_steps").get<long long>();
    if (blob.size() != header.at("blob_floats").get<std::uint64_t>() * 4) {
      fail(ErrorKind::parse, file.string() + ": blob size does not match the header");
    }
    for (const auto& e : header.at("params")) {
      const std::string name = e.at("name").get<std::string>();
      ck.params[name] = get_floats(blob, e.at("offset").get<std::uint64_t>(), e.at("rows").get<Eigen::Index>(),
                                   e.at("cols").get<Eigen::Index>(), name);
    }
    for (const auto& e : header.at("adam")) {
      const std::string name = e.at("name").get<std::string>();
      const auto rows = e.at("rows").get<Eigen::Index>(), cols = e.at("cols").get<Eigen::Index>();
      ck.adam[name] = {get_floats(blob, e.at("m_offset").get<std::uint64_t>(), rows, cols, name),
                       get_floats(blob, e.at("v_offset").get<std::uint64_t>(), rows, cols, name)};
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, file.string() + ": malformed header: " + e.what());
  }
  if (ck.config_hash != config_hash(ck.config)) {
    fail(ErrorKind::consistency, file.string() + ": config hash mismatch");
  }
  return ck;
}

void restore(const Checkpoint& ckpt, nn::ParameterStore& params, nn::Adam* adam) {
  std::size_t seen = 0;
  for (nn::Parameter* p : params.all()) {
    const auto it = ckpt.params.find(p->name);
    if (it == ckpt.params.end()) fail(ErrorKind::consistency, "checkpoint lacks parameter '" + p->name + "'");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      fail(ErrorKind::consistency, "checkpoint shape mismatch for '" + p->name + "'");
    }
    p->value = it->second;
    ++seen;
  }
  if (seen != ckpt.params.size()) fail(ErrorKind::consistency, "checkpoint has parameters the model does not");
  if (adam) {
    adam->state().clear();
    for (const auto& [name, st] : ckpt.adam) {
      if (!params.find(name)) fail(ErrorKind::consistency, "optimizer state for unknown parameter '" + name + "'");
      adam->state()[name] = st;
    }
    adam->set_steps(ckpt.adam_steps);
  }
}

}  // namespace hsnorm
