#include "hsnorm/train_eval.hpp"

#include "hsnorm/classical_fit.hpp"
#include "hsnorm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hsnorm {

namespace fs = std::filesystem;

void configure_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

ShapeSet ShapeSet::load(const fs::path& root, const std::vector<std::string>& names, bool clean_references) {
  ShapeSet set;
  std::map<std::string, std::shared_ptr<const CleanReference>> cache;
  for (const auto& name : names) {
    PointCloud cloud = load_shape(root, name);
    std::shared_ptr<const CleanReference> ref;
    if (clean_references) {
      const std::string clean = clean_shape_name(name);
      auto it = cache.find(clean);
      if (it == cache.end()) {
        std::shared_ptr<const CleanReference> made;
        if (clean == name) {
          if (cloud.normals) made = std::make_shared<CleanReference>(cloud);
        } else if (fs::exists(root / (clean + ".xyz")) && fs::exists(root / (clean + ".normals"))) {
          made = std::make_shared<CleanReference>(load_shape(root, clean));
        }
        it = cache.emplace(clean, made).first;
      }
      ref = it->second;
    }
    set.add(std::move(cloud), ref);
  }
  return set;
}

void ShapeSet::add(PointCloud cloud, std::shared_ptr<const CleanReference> clean) {
  ShapeEntry e;
  e.tree = std::make_shared<KdTree>(cloud.points);
  e.cloud = std::move(cloud);
  e.clean = std::move(clean);
  shapes_.push_back(std::move(e));
}

std::vector<Eigen::Index> ShapeSet::sizes() const {
  std::vector<Eigen::Index> out;
  for (const auto& s : shapes_) out.push_back(s.cloud.size());
  return out;
}

SplitManifest ShapeSet::manifest(int patches_per_shape) const {
  SplitManifest m;
  for (const auto& s : shapes_) {
    m.shape_names.push_back(s.cloud.name);
    m.variants.push_back(s.cloud.variant);
  }
  m.patches_per_shape_per_epoch = patches_per_shape;
  return m;
}

std::vector<std::string> list_shapes(const fs::path& root) {
  if (!fs::is_directory(root)) fail(ErrorKind::dataset_missing, "dataset directory " + root.string() + " not found");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xyz") names.push_back(entry.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) fail(ErrorKind::dataset_missing, "no .xyz files under " + root.string());
  return names;
}

TrainingPatch make_training_patch(const ShapeEntry& shape, int query, int patch_size, const Mat3* rotation,
                                  bool use_cnd) {
  RawPatch raw = extract_patch(shape.cloud, *shape.tree, query, patch_size);
  Vec3 n_world;
  if (use_cnd) {
    if (!shape.clean) fail(ErrorKind::unsupported, "shape '" + shape.cloud.name + "' has no clean reference for CND");
    n_world = shape.clean->nearest_normal(shape.cloud.points.row(query).transpose());
  } else {
    if (!shape.cloud.normals) fail(ErrorKind::consistency, "shape '" + shape.cloud.name + "' has no normals");
    n_world = shape.cloud.normals->row(query).transpose();
  }
  if (rotation) {
    raw.coords = raw.coords * rotation->transpose();
    n_world = *rotation * n_world;
  }
  const AlignedPatch aligned = align_patch(raw);
  return {aligned.coords, align_normal(aligned, n_world), shape.cloud.name + ":" + std::to_string(query)};
}

StepResult train_step(Network& net, nn::Adam& adam, const std::vector<TrainingPatch>& batch, double lr,
                      const LossWeights& weights, bool use_weight_loss) {
  if (batch.empty()) fail(ErrorKind::validation, "empty training batch");
  nn::ParameterStore& store = net.parameters();
  store.zero_grad();
  StepResult r;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& p : batch) {
    nn::Graph g;
    const NetworkOutput out = net.forward(g, p.coords);
    const PatchLoss loss = net.loss(g, out, p.coords, p.n_gt, weights, use_weight_loss);
    if (!std::isfinite(loss.report.total)) {
      std::string ids;
      for (const auto& q : batch) ids += (ids.empty() ? "" : ",") + q.id;
      fail(ErrorKind::numerical, "non-finite loss; batch patches: " + ids);
    }
    g.backward(loss.total);
    g.accumulate_param_grads(inv);
    r.loss += loss.report.total * inv;
    r.l_sin += loss.report.l_sin * inv;
    r.l_wt += loss.report.l_wt * inv;
  }
  adam.step(store, lr);
  return r;
}

namespace {

std::string log_row(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%d\n", e.epoch, e.lr, e.loss, e.l_sin, e.l_wt, e.steps);
  return buf;
}

constexpr const char* kLogHeader = "epoch,lr,loss,l_sin,l_wt,steps\n";

}  // namespace

Trainer::Trainer(TrainConfig cfg, ShapeSet shapes, fs::path out_dir)
    : cfg_(std::move(cfg)), shapes_(std::move(shapes)), out_dir_(std::move(out_dir)) {
  validate(cfg_);
  if (shapes_.size() == 0) fail(ErrorKind::dataset_missing, "training set is empty");
  net_ = std::make_unique<Network>(model_config(cfg_), cfg_.seed);
}

void Trainer::resume(const fs::path& checkpoint) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  if (ck.config_hash != config_hash(cfg_)) {
    fail(ErrorKind::config, "checkpoint " + checkpoint.string() + " was written with a different configuration");
  }
  restore(ck, net_->parameters(), &adam_);
  next_epoch_ = ck.epoch;
  last_checkpoint_ = checkpoint;
}

std::vector<EpochLog> Trainer::run(const std::function<void(const EpochLog&)>& on_epoch) {
  configure_allocator();
  fs::create_directories(out_dir_);
  const fs::path log_file = out_dir_ / "train_log.csv";

  // Keep rows from earlier epochs when resuming; start fresh otherwise.
  std::string kept = kLogHeader;
  if (next_epoch_ > 0 && fs::exists(log_file)) {
    std::ifstream in(log_file);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty() && std::stoi(line) < next_epoch_) kept += line + "\n";
    }
  }
  {
    std::ofstream out(log_file, std::ios::trunc);
    out << kept;
  }

  const PatchSampler sampler(shapes_.manifest(cfg_.patches_per_shape), shapes_.sizes(), cfg_.seed);
  const LossWeights weights = loss_weights(cfg_);
  std::vector<EpochLog> history;
  for (int e = next_epoch_; e < cfg_.epochs; ++e) {
    EpochLog log;
    log.epoch = e;
    log.lr = lr_for_epoch(cfg_, e);
    const std::vector<PatchRef> stream = sampler.epoch(e);
    const std::uint64_t epoch_seed = mix_seed(mix_seed(cfg_.seed, 0x726f74ULL), static_cast<std::uint64_t>(e));
    for (std::size_t b = 0; b < stream.size(); b += cfg_.batch_size) {
      const std::size_t end = std::min(stream.size(), b + cfg_.batch_size);
      std::vector<TrainingPatch> batch;
      for (std::size_t i = b; i < end; ++i) {
        const Mat3 rot = synthetic::random_rotation(mix_seed(epoch_seed, i));
        batch.push_back(make_training_patch(shapes_.at(stream[i].shape_index), stream[i].query, cfg_.patch_size,
                                            cfg_.augment_rotation ? &rot : nullptr, cfg_.use_cnd));
      }
      const StepResult r = train_step(*net_, adam_, batch, log.lr, weights, cfg_.use_wt_loss);
      log.loss += r.loss;
      log.l_sin += r.l_sin;
      log.l_wt += r.l_wt;
      ++log.steps;
    }
    if (log.steps > 0) {
      log.loss /= log.steps;
      log.l_sin /= log.steps;
      log.l_wt /= log.steps;
    }
    {
      std::ofstream out(log_file, std::ios::app);
      out << log_row(log);
    }
    next_epoch_ = e + 1;
    if (next_epoch_ % cfg_.checkpoint_every == 0 || next_epoch_ == cfg_.epochs) {
      last_checkpoint_ = checkpoint_path(out_dir_, next_epoch_);
      save_checkpoint(last_checkpoint_, cfg_, next_epoch_, net_->parameters(), &adam_);
    }
    history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return history;
}

std::unique_ptr<Network> load_network(const fs::path& checkpoint, TrainConfig* cfg_out) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  auto net = std::make_unique<Network>(model_config(ck.config), ck.config.seed);
  restore(ck, net->parameters(), nullptr);
  if (cfg_out) *cfg_out = ck.config;
  return net;
}

NormalPredictor network_predictor(const Network& net) {
  return [&net](const ShapeEntry& s, int index) {
    const AlignedPatch p = align_patch(extract_patch(s.cloud, *s.tree, index, net.config().patch_size));
    return unalign_normal(p, net.predict(p.coords));
  };
}

NormalPredictor pca_predictor(int k) {
  return [k](const ShapeEntry& s, int index) { return pca_normal(extract_patch(s.cloud, *s.tree, index, k).coords); };
}

NormalPredictor jet_predictor(int k, int order) {
  return [k, order](const ShapeEntry& s, int index) {
    const AlignedPatch p = align_patch(extract_patch(s.cloud, *s.tree, index, k));
    return unalign_normal(p, jet_normal(fit_jet(p.coords, order)));
  };
}

std::vector<int> evaluation_indices(const PointCloud& cloud) {
  if (cloud.eval_indices) return *cloud.eval_indices;
  log_info("shape '" + cloud.name + "' has no evaluation indices; evaluating all " + std::to_string(cloud.size()) +
           " points");
  std::vector<int> all(static_cast<std::size_t>(cloud.size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return all;
}

Points predict_normals(const ShapeEntry& shape, const std::vector<int>& indices, const NormalPredictor& predictor) {
  Points out(static_cast<Eigen::Index>(indices.size()), 3);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = predictor(shape, indices[i]).normalized().transpose();
  }
  return out;
}

ShapeResult score_shape(const ShapeEntry& shape, const std::vector<int>& indices, const Points& predictions) {
  if (!shape.cloud.normals) {
    fail(ErrorKind::consistency, "shape '" + shape.cloud.name + "' has no ground-truth normals to score against");
  }
  if (predictions.rows() != static_cast<Eigen::Index>(indices.size())) {
    fail(ErrorKind::shape, "prediction count does not match the evaluation indices");
  }
  ShapeResult r;
  r.name = shape.cloud.name;
  r.variant = shape.cloud.variant;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Vec3 pred = predictions.row(static_cast<Eigen::Index>(i)).transpose();
    r.errors.push_back(angular_error(pred, shape.cloud.normals->row(indices[i]).transpose()));
    if (shape.clean) {
      r.cnd_errors.push_back(cnd_error(pred, shape.cloud.points.row(indices[i]).transpose(), shape.clean.get()));
    }
  }
  return r;
}

MetricsReport evaluate(const ShapeSet& shapes, const NormalPredictor& predictor, nlohmann::json metadata) {
  std::vector<ShapeResult> results;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    const ShapeEntry& shape = shapes.at(s);
    const std::vector<int> idx = evaluation_indices(shape.cloud);
    results.push_back(score_shape(shape, idx, predict_normals(shape, idx, predictor)));
    log_info("evaluated " + shape.cloud.name + ": rmse " + std::to_string(rmse(results.back().errors)));
  }
  return build_report(results, std::move(metadata));
}

}  // namespace hsnorm
