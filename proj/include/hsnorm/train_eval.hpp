#pragma once

#include "hsnorm/checkpoint.hpp"
#include "hsnorm/metrics.hpp"

#include <filesystem>
#include <functional>
#include <memory>

namespace hsnorm {

// Raises the glibc mmap/trim thresholds so per-step tape buffers are reused
// instead of being returned to the kernel. No-op elsewhere.
void configure_allocator();

struct ShapeEntry {
  PointCloud cloud;
  std::shared_ptr<const KdTree> tree;
  // Clean counterpart for CND: the shape itself when clean, the matching
  // clean shape when one is available, otherwise null.
  std::shared_ptr<const CleanReference> clean;
};

class ShapeSet {
 public:
  // Loads `<root>/<name>.xyz` (+ normals, indices) for every name. With
  // `clean_references`, noisy shapes are paired with `<root>/<clean name>`.
  static ShapeSet load(const std::filesystem::path& root, const std::vector<std::string>& names,
                       bool clean_references);
  void add(PointCloud cloud, std::shared_ptr<const CleanReference> clean = nullptr);

  std::size_t size() const { return shapes_.size(); }
  const ShapeEntry& at(std::size_t i) const { return shapes_.at(i); }
  std::vector<Eigen::Index> sizes() const;
  SplitManifest manifest(int patches_per_shape) const;

 private:
  std::vector<ShapeEntry> shapes_;
};

// Every `*.xyz` stem under `root`, sorted.
std::vector<std::string> list_shapes(const std::filesystem::path& root);

struct TrainingPatch {
  Points coords;  // aligned frame
  Vec3 n_gt;      // aligned frame
  std::string id; // "<shape>:<query>"
};

// Extracts, optionally rotates (before alignment), and aligns one patch; the
// target normal is the shape's normal, or the nearest clean normal with `use_cnd`.
TrainingPatch make_training_patch(const ShapeEntry& shape, int query, int patch_size, const Mat3* rotation,
                                  bool use_cnd);

struct StepResult {
  double loss = 0.0;
  double l_sin = 0.0;
  double l_wt = 0.0;
};

// One optimizer step on the batch mean of the patch losses. A non-finite loss
// aborts with ErrorKind::numerical naming the batch's patch ids; parameters
// are left untouched in that case.
StepResult train_step(Network& net, nn::Adam& adam, const std::vector<TrainingPatch>& batch, double lr,
                      const LossWeights& weights, bool use_weight_loss);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double l_sin = 0.0;
  double l_wt = 0.0;
  int steps = 0;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, ShapeSet shapes, std::filesystem::path out_dir);

  // Continues from a checkpoint written with the same configuration.
  void resume(const std::filesystem::path& checkpoint);
  // Runs the remaining epochs, writing train_log.csv and ckpt_<epoch> files.
  std::vector<EpochLog> run(const std::function<void(const EpochLog&)>& on_epoch = {});

  Network& network() { return *net_; }
  const nn::Adam& optimizer() const { return adam_; }
  int next_epoch() const { return next_epoch_; }
  const std::filesystem::path& last_checkpoint() const { return last_checkpoint_; }

 private:
  TrainConfig cfg_;
  ShapeSet shapes_;
  std::filesystem::path out_dir_;
  std::unique_ptr<Network> net_;
  nn::Adam adam_;
  int next_epoch_ = 0;
  std::filesystem::path last_checkpoint_;
};

// Builds a network from a checkpoint's configuration and parameters.
std::unique_ptr<Network> load_network(const std::filesystem::path& checkpoint, TrainConfig* cfg_out = nullptr);

// World-frame normal estimate for one point of a shape.
using NormalPredictor = std::function<Vec3(const ShapeEntry&, int index)>;

NormalPredictor network_predictor(const Network& net);
NormalPredictor pca_predictor(int k);
NormalPredictor jet_predictor(int k, int order);

// The shape's evaluation indices, or every point (with a notice) when absent.
std::vector<int> evaluation_indices(const PointCloud& cloud);

Points predict_normals(const ShapeEntry& shape, const std::vector<int>& indices, const NormalPredictor& predictor);

ShapeResult score_shape(const ShapeEntry& shape, const std::vector<int>& indices, const Points& predictions);

// Predicts every shape over its evaluation indices and aggregates the report.
MetricsReport evaluate(const ShapeSet& shapes, const NormalPredictor& predictor, nlohmann::json metadata = {});

}  // namespace hsnorm
