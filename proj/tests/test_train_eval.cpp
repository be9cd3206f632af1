#include "doctest.h"

#include "hsnorm/synthetic.hpp"
#include "hsnorm/train_eval.hpp"
#include "test_util.hpp"

#include <cmath>
#include <limits>

using namespace hsnorm;
using hsnorm::testing::TempDir;

namespace {

TrainConfig smoke_config() {
  TrainConfig c;
  c.patch_size = 64;
  c.epochs = 2;
  c.batch_size = 4;
  c.lr = 1e-3;
  c.lr_milestones = {};
  c.patches_per_shape = 4;
  c.checkpoint_every = 1;
  c.knn_k = 8;
  c.width1 = c.width2 = c.c_g = 16;
  c.c_c = 8;
  c.dense_growth = 8;
  c.encoding_dim = 16;
  c.state_dim = 4;
  c.token_hidden = 16;
  c.depth = 6;
  c.seed = 7;
  return c;
}

ShapeSet smoke_shapes() {
  ShapeSet s;
  PointCloud a = synthetic::sphere(400, 1.0, 1);
  a.name = "sphere";
  PointCloud b = synthetic::torus(400, 1.0, 0.3, 2);
  b.name = "torus";
  PointCloud c = synthetic::quadric(400, 0.5, 0.1, -0.3, 1.0, 3);
  c.name = "quadric";
  PointCloud d = synthetic::plane(400, Vec3(0, 0, 1), 1.0, 4);
  d.name = "plane";
  for (auto* p : {&a, &b, &c, &d}) s.add(std::move(*p));
  return s;
}

double mean_error(const MetricsReport& r) {
  double sum = 0.0;
  for (const auto& [name, v] : r.per_shape_rmse) sum += v;
  return sum / static_cast<double>(r.per_shape_rmse.size());
}

}  // namespace

TEST_CASE("smoke training writes checkpoints that reload exactly") {
  TempDir dir;
  Trainer t(smoke_config(), smoke_shapes(), dir.path());
  const auto logs = t.run();
  REQUIRE(logs.size() == 2);
  for (const auto& e : logs) {
    CHECK(std::isfinite(e.loss));
    CHECK(e.steps == 4);
  }
  CHECK(std::filesystem::exists(dir / "ckpt_1.ckpt"));
  CHECK(std::filesystem::exists(dir / "ckpt_2.ckpt"));
  CHECK(t.last_checkpoint() == dir / "ckpt_2.ckpt");
  const std::string log = hsnorm::testing::read_text(dir / "train_log.csv");
  CHECK(log.rfind("epoch,lr,loss,l_sin,l_wt,steps\n", 0) == 0);

  TrainConfig cfg;
  auto net = load_network(dir / "ckpt_2.ckpt", &cfg);
  CHECK(config_hash(cfg) == config_hash(smoke_config()));
  for (const nn::Parameter* p : t.network().parameters().all()) {
    const nn::Parameter* q = net->parameters().find(p->name);
    REQUIRE(q);
    CHECK((p->value.array() == q->value.array()).all());
  }
}

TEST_CASE("resuming reproduces an uninterrupted run") {
  TempDir a, b;
  Trainer full(smoke_config(), smoke_shapes(), a.path());
  full.run();
  TrainConfig cfg = smoke_config();
  Trainer part(cfg, smoke_shapes(), b.path());
  part.resume(a / "ckpt_1.ckpt");
  CHECK(part.next_epoch() == 1);
  part.run();
  CHECK(hsnorm::testing::read_text(a / "ckpt_2.ckpt") == hsnorm::testing::read_text(b / "ckpt_2.ckpt"));

  TrainConfig other = smoke_config();
  other.lr = 2e-3;
  TempDir c;
  Trainer wrong(other, smoke_shapes(), c.path());
  CHECK_THROWS_AS(wrong.resume(a / "ckpt_1.ckpt"), Error);
}

TEST_CASE("identical seeds give identical loss curves") {
  TempDir a, b;
  const auto la = Trainer(smoke_config(), smoke_shapes(), a.path()).run();
  const auto lb = Trainer(smoke_config(), smoke_shapes(), b.path()).run();
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].loss == lb[i].loss);
}

TEST_CASE("a non-finite loss aborts and names the batch") {
  const TrainConfig cfg = smoke_config();
  Network net(model_config(cfg), 1);
  nn::Adam adam;
  const ShapeSet shapes = smoke_shapes();
  std::vector<TrainingPatch> batch = {make_training_patch(shapes.at(0), 3, cfg.patch_size, nullptr, false),
                                      make_training_patch(shapes.at(1), 5, cfg.patch_size, nullptr, false)};
  batch[1].n_gt = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  std::vector<MatX> before;
  for (const nn::Parameter* p : net.parameters().all()) before.push_back(p->value);
  try {
    train_step(net, adam, batch, 1e-3, loss_weights(cfg), true);
    FAIL("expected numerical error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::numerical);
    const std::string msg = e.what();
    CHECK(msg.find(batch[0].id) != std::string::npos);
    CHECK(msg.find(batch[1].id) != std::string::npos);
  }
  std::size_t i = 0;
  for (const nn::Parameter* p : net.parameters().all()) CHECK((p->value.array() == before[i++].array()).all());
  CHECK(adam.steps() == 0);
}

TEST_CASE("training patches are aligned with a unit target") {
  const ShapeSet shapes = smoke_shapes();
  const Mat3 r = synthetic::random_rotation(9);
  const TrainingPatch p = make_training_patch(shapes.at(1), 17, 64, &r, false);
  CHECK(p.coords.rows() == 64);
  CHECK(p.id == "torus:17");
  CHECK(p.n_gt.norm() == doctest::Approx(1.0));
  CHECK(p.coords.row(0).norm() < 1e-12);
  const TrainingPatch q = make_training_patch(shapes.at(1), 17, 64, nullptr, false);
  // Alignment removes the rotation up to the target's sign.
  CHECK(std::abs(std::abs(p.n_gt.dot(q.n_gt)) - 1.0) < 1e-6);
}

TEST_CASE("PCA baseline on a dense sphere") {
  ShapeSet s;
  PointCloud c = synthetic::sphere(10000, 1.0, 11);
  c.name = "sphere";
  s.add(std::move(c));
  const MetricsReport r = evaluate(s, pca_predictor(64));
  CHECK(mean_error(r) < 1.0);
}

TEST_CASE("second-order jets recover a clean quadric") {
  ShapeSet s;
  PointCloud c = synthetic::quadric(4000, 0.6, 0.2, -0.4, 1.0, 12);
  c.name = "quadric";
  c.eval_indices = std::vector<int>();
  for (int i = 0; i < c.size(); ++i) {
    if (c.points.row(i).head<2>().cwiseAbs().maxCoeff() < 0.7) c.eval_indices->push_back(i);
  }
  s.add(std::move(c));
  const MetricsReport r = evaluate(s, jet_predictor(64, 2));
  CHECK(mean_error(r) < 0.1);
}

TEST_CASE("CND on a noise-free cloud equals the plain error") {
  ShapeSet s;
  PointCloud c = synthetic::sphere(3000, 1.0, 13);
  c.name = "sphere";
  auto ref = std::make_shared<const CleanReference>(c);
  c.eval_indices = std::vector<int>{0, 10, 20, 30, 40, 50};
  s.add(std::move(c), ref);
  const MetricsReport r = evaluate(s, pca_predictor(32));
  REQUIRE(r.cnd);
  CHECK(*r.cnd == doctest::Approx(r.per_shape_rmse.at("sphere")).epsilon(1e-9));
}

TEST_CASE("CND on a noisy plane does not exceed the plain error") {
  PointCloud clean = synthetic::plane(4000, Vec3(0, 0, 1), 1.0, 14);
  clean.name = "plane";
  PointCloud noisy = synthetic::with_noise(clean, 0.02, 15, "plane_noise_white_2.00e-02");
  noisy.eval_indices = std::vector<int>();
  for (int i = 0; i < noisy.size(); i += 40) noisy.eval_indices->push_back(i);
  ShapeSet s;
  s.add(std::move(noisy), std::make_shared<const CleanReference>(clean));
  const MetricsReport r = evaluate(s, pca_predictor(32));
  REQUIRE(r.cnd);
  CHECK(*r.cnd <= r.per_shape_rmse.begin()->second + 1e-9);
}

TEST_CASE("missing indices fall back to every point") {
  PointCloud c = synthetic::sphere(50, 1.0, 16);
  c.eval_indices.reset();
  const auto idx = evaluation_indices(c);
  REQUIRE(idx.size() == 50);
  for (int i = 0; i < 50; ++i) CHECK(idx[i] == i);
  c.eval_indices = std::vector<int>{4, 2};
  CHECK(evaluation_indices(c) == std::vector<int>{4, 2});
}

TEST_CASE("shape sets load from disk and pair clean references") {
  TempDir dir;
  PointCloud clean = synthetic::sphere(300, 1.0, 17);
  clean.name = "ball";
  write_shape(dir.path(), clean);
  PointCloud noisy = synthetic::with_noise(clean, 0.01, 18, "ball_noise_white_1.00e-02");
  write_shape(dir.path(), noisy);
  CHECK(list_shapes(dir.path()) == std::vector<std::string>{"ball", "ball_noise_white_1.00e-02"});
  const ShapeSet s = ShapeSet::load(dir.path(), list_shapes(dir.path()), true);
  REQUIRE(s.size() == 2);
  CHECK(s.at(0).clean);
  CHECK(s.at(1).clean);
  const ShapeSet bare = ShapeSet::load(dir.path(), {"ball_noise_white_1.00e-02"}, false);
  CHECK_FALSE(bare.at(0).clean);
  try {
    list_shapes(dir / "nowhere");
    FAIL("expected dataset_missing");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::dataset_missing);
  }
}
