#pragma once

#include "hsnorm/common.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hsnorm {

namespace fs = std::filesystem;

enum class Variant { clean, noise_low, noise_med, noise_high, stripe, gradient };

inline constexpr Variant kAllVariants[] = {Variant::clean,      Variant::noise_low,
                                           Variant::noise_med,  Variant::noise_high,
                                           Variant::stripe,     Variant::gradient};

std::string_view to_string(Variant v);
// Column label used in RMSE tables ("None", "Low", ..., "Grad.").
std::string_view table_label(Variant v);

// Infers the variant from PCPNet-style shape names: `_noise_white_<sigma>`,
// `_ddist_minmax` (gradient) and `_ddist_minmax_layers` (stripe).
Variant variant_from_name(const std::string& name);
// Strips the variant suffix, e.g. "fandisk100k_noise_white_1.00e-02" -> "fandisk100k".
std::string clean_shape_name(const std::string& name);

struct PointCloud {
  std::string name;
  Variant variant = Variant::clean;
  Points points;
  std::optional<Points> normals;
  std::optional<std::vector<int>> eval_indices;

  Eigen::Index size() const { return points.rows(); }
};

// Reads `<root>/<name>.xyz` plus optional `.normals` and `.pidx`.
PointCloud load_shape(const fs::path& root, const std::string& name);

Points read_xyz(const fs::path& file);
// Rows are renormalized to unit length; a zero row is a parse error.
Points read_normals(const fs::path& file);
// ASCII one-index-per-line or raw little-endian int32, sniffed.
std::vector<int> read_indices(const fs::path& file);

// One shape name per line; blank lines and `#` comments ignored.
std::vector<std::string> read_shape_list(const fs::path& file);

void write_xyz(const fs::path& file, const Points& points);
void write_indices(const fs::path& file, const std::vector<int>& indices);
void write_shape(const fs::path& root, const PointCloud& cloud);

// Writes one "nx ny nz" row per prediction. When `indices` is given, the rows
// correspond to those point indices and a sidecar `.pidx` file is written next
// to `file`. Rows must be unit length within 1e-4.
void write_normals(const PointCloud& cloud, const Points& predictions, const fs::path& file,
                   const std::vector<int>* indices = nullptr);

struct SplitManifest {
  std::vector<std::string> shape_names;
  std::vector<Variant> variants;  // parallel to shape_names
  int patches_per_shape_per_epoch = 1000;
};

// Builds a manifest from a list file, checking each shape resolves to `<root>/<name>.xyz`.
SplitManifest make_manifest(const fs::path& root, const fs::path& list_file,
                            int patches_per_shape_per_epoch = 1000);
SplitManifest make_manifest(const fs::path& root, std::vector<std::string> names,
                            int patches_per_shape_per_epoch = 1000);

struct PatchRef {
  std::string shape;
  int shape_index = 0;
  int query = 0;

  bool operator==(const PatchRef&) const = default;
};

// Deterministic per-epoch patch stream. Each shape draws from its own substream
// seeded by (seed, shape name, epoch), so a shape's draws do not depend on the
// other entries of the manifest; the combined stream is then shuffled.
class PatchSampler {
 public:
  PatchSampler(SplitManifest manifest, std::vector<Eigen::Index> shape_sizes, std::uint64_t seed);

  std::vector<PatchRef> epoch(int epoch_index) const;
  // Draws of one shape for an epoch, in draw order.
  std::vector<int> shape_draws(int shape_index, int epoch_index) const;

  const SplitManifest& manifest() const { return manifest_; }

 private:
  SplitManifest manifest_;
  std::vector<Eigen::Index> sizes_;
  std::uint64_t seed_;
};

// Convenience wrapper: the stream for a single epoch.
std::vector<PatchRef> sample_training_patches(const SplitManifest& manifest,
                                              const std::vector<Eigen::Index>& shape_sizes,
                                              std::uint64_t seed, int epoch_index = 0);

}  // namespace hsnorm
