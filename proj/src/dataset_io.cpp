#include "hsnorm/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace hsnorm {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::clean: return "clean";
    case Variant::noise_low: return "noise_low";
    case Variant::noise_med: return "noise_med";
    case Variant::noise_high: return "noise_high";
    case Variant::stripe: return "stripe";
    case Variant::gradient: return "gradient";
  }
  return "clean";
}

std::string_view table_label(Variant v) {
  switch (v) {
    case Variant::clean: return "None";
    case Variant::noise_low: return "Low";
    case Variant::noise_med: return "Med.";
    case Variant::noise_high: return "High";
    case Variant::stripe: return "Stripe";
    case Variant::gradient: return "Grad.";
  }
  return "None";
}

namespace {

constexpr std::string_view kNoiseTag = "_noise_white_";
constexpr std::string_view kStripeTag = "_ddist_minmax_layers";
constexpr std::string_view kGradientTag = "_ddist_minmax";

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_int(std::string_view tok, long long& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorKind::dataset_missing, "cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Points read_rows3(const fs::path& file) {
  const std::string text = read_file(file);
  std::vector<double> values;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 3) {
      fail(ErrorKind::parse, file.string() + ":" + std::to_string(line_no) + ": expected 3 columns, got " +
                                 std::to_string(toks.size()));
    }
    for (auto tok : toks) {
      double v = 0.0;
      if (!parse_double(tok, v)) {
        fail(ErrorKind::parse, file.string() + ":" + std::to_string(line_no) + ": non-numeric token '" +
                                   std::string(tok) + "'");
      }
      if (!std::isfinite(v)) {
        fail(ErrorKind::parse, file.string() + ":" + std::to_string(line_no) + ": non-finite value '" +
                                   std::string(tok) + "'");
      }
      values.push_back(v);
    }
  }
  Points pts(static_cast<Eigen::Index>(values.size() / 3), 3);
  std::copy(values.begin(), values.end(), pts.data());
  return pts;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + file.string());
  out << text;
  if (!out) fail(ErrorKind::io, "write failed for " + file.string());
}

}  // namespace

Variant variant_from_name(const std::string& name) {
  if (name.find(kStripeTag) != std::string::npos) return Variant::stripe;
  if (name.find(kGradientTag) != std::string::npos) return Variant::gradient;
  if (auto p = name.find(kNoiseTag); p != std::string::npos) {
    double sigma = 0.0;
    std::string_view rest(name.c_str() + p + kNoiseTag.size());
    if (!parse_double(rest, sigma)) return Variant::noise_med;
    // PCPNet ships three white-noise levels; thresholds sit between them.
    if (sigma <= 2e-3) return Variant::noise_low;
    if (sigma <= 7.5e-3) return Variant::noise_med;
    return Variant::noise_high;
  }
  return Variant::clean;
}

std::string clean_shape_name(const std::string& name) {
  for (auto tag : {kNoiseTag, kGradientTag}) {
    if (auto p = name.find(tag); p != std::string::npos) return name.substr(0, p);
  }
  return name;
}

Points read_xyz(const fs::path& file) {
  Points pts = read_rows3(file);
  if (pts.rows() == 0) fail(ErrorKind::parse, file.string() + ": no points");
  return pts;
}

Points read_normals(const fs::path& file) {
  Points n = read_rows3(file);
  for (Eigen::Index i = 0; i < n.rows(); ++i) {
    const double len = n.row(i).norm();
    if (len == 0.0) {
      fail(ErrorKind::parse, file.string() + ":" + std::to_string(i + 1) + ": zero-length normal");
    }
    n.row(i) /= len;
  }
  return n;
}

std::vector<int> read_indices(const fs::path& file) {
  const std::string text = read_file(file);
  std::vector<int> out;
  bool ascii = true;
  for (auto tok : split_ws(text)) {
    long long v = 0;
    if (!parse_int(tok, v) || v < 0 || v > INT32_MAX) {
      ascii = false;
      break;
    }
    out.push_back(static_cast<int>(v));
  }
  if (ascii) return out;

  if (text.size() % 4 != 0) {
    fail(ErrorKind::parse, file.string() + ": neither ASCII integers nor int32 binary");
  }
  out.assign(text.size() / 4, 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto* b = reinterpret_cast<const unsigned char*>(text.data() + 4 * i);
    std::uint32_t u = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
                      (std::uint32_t(b[3]) << 24);
    out[i] = static_cast<std::int32_t>(u);
  }
  return out;
}

std::vector<std::string> read_shape_list(const fs::path& file) {
  const std::string text = read_file(file);
  std::vector<std::string> names;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    auto toks = split_ws(line);
    if (!toks.empty()) names.emplace_back(toks.front());
  }
  return names;
}

PointCloud load_shape(const fs::path& root, const std::string& name) {
  const fs::path xyz = root / (name + ".xyz");
  if (!fs::exists(xyz)) fail(ErrorKind::dataset_missing, "missing point file " + xyz.string());

  PointCloud cloud;
  cloud.name = name;
  cloud.variant = variant_from_name(name);
  cloud.points = read_xyz(xyz);

  const fs::path nrm = root / (name + ".normals");
  if (fs::exists(nrm)) {
    Points n = read_normals(nrm);
    if (n.rows() != cloud.points.rows()) {
      fail(ErrorKind::consistency, nrm.string() + ": " + std::to_string(n.rows()) + " normals for " +
                                       std::to_string(cloud.points.rows()) + " points");
    }
    cloud.normals = std::move(n);
  }

  const fs::path pidx = root / (name + ".pidx");
  if (fs::exists(pidx)) {
    std::vector<int> idx = read_indices(pidx);
    std::vector<char> seen(static_cast<std::size_t>(cloud.size()), 0);
    for (int i : idx) {
      if (i < 0 || i >= cloud.size()) {
        fail(ErrorKind::consistency, pidx.string() + ": index " + std::to_string(i) + " out of range");
      }
      if (seen[i]++) fail(ErrorKind::consistency, pidx.string() + ": duplicate index " + std::to_string(i));
    }
    cloud.eval_indices = std::move(idx);
  }
  return cloud;
}

void write_xyz(const fs::path& file, const Points& points) {
  std::ostringstream out;
  out << std::setprecision(9);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    out << points(i, 0) << ' ' << points(i, 1) << ' ' << points(i, 2) << '\n';
  }
  write_text(file, out.str());
}

void write_indices(const fs::path& file, const std::vector<int>& indices) {
  std::ostringstream out;
  for (int i : indices) out << i << '\n';
  write_text(file, out.str());
}

void write_shape(const fs::path& root, const PointCloud& cloud) {
  write_xyz(root / (cloud.name + ".xyz"), cloud.points);
  if (cloud.normals) write_xyz(root / (cloud.name + ".normals"), *cloud.normals);
  if (cloud.eval_indices) write_indices(root / (cloud.name + ".pidx"), *cloud.eval_indices);
}

void write_normals(const PointCloud& cloud, const Points& predictions, const fs::path& file,
                   const std::vector<int>* indices) {
  const Eigen::Index expected = indices ? static_cast<Eigen::Index>(indices->size()) : cloud.size();
  if (predictions.rows() != expected) {
    fail(ErrorKind::validation, "prediction count " + std::to_string(predictions.rows()) +
                                    " does not match expected " + std::to_string(expected));
  }
  for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
    const double len = predictions.row(i).norm();
    if (!std::isfinite(len) || std::abs(len - 1.0) > 1e-4) {
      fail(ErrorKind::validation, "prediction row " + std::to_string(i) + " is not a unit vector");
    }
  }
  if (indices) {
    for (int i : *indices) {
      if (i < 0 || i >= cloud.size()) fail(ErrorKind::validation, "prediction index out of range");
    }
  }
  write_xyz(file, predictions);
  if (indices) {
    fs::path side = file;
    side.replace_extension(".pidx");
    write_indices(side, *indices);
  }
}

SplitManifest make_manifest(const fs::path& root, std::vector<std::string> names,
                            int patches_per_shape_per_epoch) {
  if (names.empty()) fail(ErrorKind::config, "empty shape list");
  if (patches_per_shape_per_epoch <= 0) fail(ErrorKind::config, "patches per shape must be positive");
  SplitManifest m;
  for (auto& n : names) {
    if (!fs::exists(root / (n + ".xyz"))) {
      fail(ErrorKind::dataset_missing, "shape '" + n + "' not found under " + root.string());
    }
    m.variants.push_back(variant_from_name(n));
  }
  m.shape_names = std::move(names);
  m.patches_per_shape_per_epoch = patches_per_shape_per_epoch;
  return m;
}

SplitManifest make_manifest(const fs::path& root, const fs::path& list_file, int patches_per_shape_per_epoch) {
  return make_manifest(root, read_shape_list(list_file), patches_per_shape_per_epoch);
}

PatchSampler::PatchSampler(SplitManifest manifest, std::vector<Eigen::Index> shape_sizes, std::uint64_t seed)
    : manifest_(std::move(manifest)), sizes_(std::move(shape_sizes)), seed_(seed) {
  if (manifest_.shape_names.empty()) fail(ErrorKind::config, "manifest is empty");
  if (sizes_.size() != manifest_.shape_names.size()) {
    fail(ErrorKind::consistency, "shape size list does not match manifest");
  }
  for (std::size_t s = 0; s < sizes_.size(); ++s) {
    if (sizes_[s] < 1) fail(ErrorKind::consistency, "shape '" + manifest_.shape_names[s] + "' is empty");
    if (manifest_.patches_per_shape_per_epoch > sizes_[s]) {
      log_warn("shape '" + manifest_.shape_names[s] + "' has " + std::to_string(sizes_[s]) + " points, fewer than " +
               std::to_string(manifest_.patches_per_shape_per_epoch) +
               " patches per epoch; sampling with replacement");
    }
  }
}

std::vector<int> PatchSampler::shape_draws(int shape_index, int epoch_index) const {
  const auto n = static_cast<int>(sizes_.at(shape_index));
  const int want = manifest_.patches_per_shape_per_epoch;
  std::mt19937_64 rng(mix_seed(mix_seed(seed_, hash_string(manifest_.shape_names[shape_index])),
                               static_cast<std::uint64_t>(epoch_index)));
  std::vector<int> out;
  out.reserve(want);
  if (want <= n) {
    // partial Fisher-Yates: first `want` entries of a random permutation
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 0; i < want; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(perm[i], perm[pick(rng)]);
      out.push_back(perm[i]);
    }
  } else {
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int i = 0; i < want; ++i) out.push_back(pick(rng));
  }
  return out;
}

std::vector<PatchRef> PatchSampler::epoch(int epoch_index) const {
  std::vector<PatchRef> stream;
  for (std::size_t s = 0; s < sizes_.size(); ++s) {
    for (int q : shape_draws(static_cast<int>(s), epoch_index)) {
      stream.push_back({manifest_.shape_names[s], static_cast<int>(s), q});
    }
  }
  std::mt19937_64 rng(mix_seed(seed_ ^ 0x5eed5eedULL, static_cast<std::uint64_t>(epoch_index)));
  std::shuffle(stream.begin(), stream.end(), rng);
  return stream;
}

std::vector<PatchRef> sample_training_patches(const SplitManifest& manifest,
                                              const std::vector<Eigen::Index>& shape_sizes, std::uint64_t seed,
                                              int epoch_index) {
  return PatchSampler(manifest, shape_sizes, seed).epoch(epoch_index);
}

}  // namespace hsnorm
