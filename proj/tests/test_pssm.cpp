#include "doctest.h"

#include "gradcheck.hpp"
#include "hsnorm/pssm.hpp"

#include <random>

using namespace hsnorm;
using nn::Graph;
using nn::Mat;
using nn::Var;

namespace {
Mat rand_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

SsmParameters random_lti(Eigen::Index e, Eigen::Index s, std::mt19937_64& rng) {
  const Mat a = -rand_mat(e, s, rng, 0.1, 3.0);
  std::uniform_real_distribution<double> dt(0.01, 0.5);
  return discretize(a, rand_mat(e, s, rng), rand_mat(e, s, rng), dt(rng));
}

PssmConfig small_config(int e = 4) {
  PssmConfig cfg;
  cfg.encoding_dim = e;
  cfg.state_dim = 3;
  cfg.token_hidden = 5;
  return cfg;
}

// Replaces the zero-initialised output projection so the block is non-trivial.
void randomize_outputs(nn::ParameterStore& store, std::mt19937_64& rng) {
  for (nn::Parameter* p : store.all())
    if (p->name.size() > 11 && p->name.compare(p->name.size() - 11, 11, ".out.weight") == 0)
      p->value = rand_mat(p->value.rows(), p->value.cols(), rng, -0.5, 0.5);
}
}  // namespace

TEST_CASE("scan of a unit accumulator is a cumulative sum") {
  SsmParameters p;
  p.a_bar = Mat::Ones(1, 1);
  p.b_bar = Mat::Ones(1, 1);
  p.c = Mat::Ones(1, 1);
  const Mat y = ssm_scan(p, Mat::Ones(3, 1));
  CHECK(y(0, 0) == 1.0);
  CHECK(y(1, 0) == 2.0);
  CHECK(y(2, 0) == 3.0);
}

TEST_CASE("a zero transition is memoryless") {
  std::mt19937_64 rng(1);
  SsmParameters p = random_lti(3, 4, rng);
  p.a_bar.setZero();
  const Mat x = rand_mat(5, 3, rng);
  const Mat y = ssm_scan(p, x);
  const Eigen::RowVectorXd cb = p.c.cwiseProduct(p.b_bar).rowwise().sum().transpose();
  CHECK((y - (x.array().rowwise() * cb.array()).matrix()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("convolution form basics") {
  std::mt19937_64 rng(2);
  const SsmParameters p = random_lti(3, 5, rng);
  const Mat x1 = rand_mat(1, 3, rng);
  const Eigen::RowVectorXd cb = p.c.cwiseProduct(p.b_bar).rowwise().sum().transpose();
  CHECK((ssm_conv(p, x1) - x1.cwiseProduct(cb)).cwiseAbs().maxCoeff() < 1e-14);

  Mat impulse = Mat::Zero(8, 3);
  impulse.row(0).setOnes();
  CHECK((ssm_conv(p, impulse) - ssm_kernel(p, 8)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("scan and convolution agree on random time-invariant systems") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(1, 64), state(1, 16), chan(1, 6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const SsmParameters p = random_lti(chan(rng), state(rng), rng);
    const Mat x = rand_mat(len(rng), p.a_bar.rows(), rng);
    worst = std::max(worst, (ssm_scan(p, x) - ssm_conv(p, x)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("the convolution form rejects selective parameters") {
  std::mt19937_64 rng(4);
  SsmParameters p;
  p.a = -rand_mat(2, 3, rng, 0.5, 1.0);
  p.delta = rand_mat(4, 2, rng, 0.1, 0.2);
  p.b_tokens = rand_mat(4, 3, rng);
  p.c_tokens = rand_mat(4, 3, rng);
  try {
    ssm_conv(p, rand_mat(4, 2, rng));
    FAIL("expected unsupported error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unsupported);
  }
  CHECK(ssm_scan(p, rand_mat(4, 2, rng)).rows() == 4);
}

TEST_CASE("selective scan with constant steps equals the time-invariant scan") {
  std::mt19937_64 rng(5);
  const Mat a = -rand_mat(3, 4, rng, 0.5, 2.0), b = rand_mat(1, 4, rng), c = rand_mat(1, 4, rng);
  const double dt = 0.2;
  SsmParameters sel;
  sel.a = a;
  sel.delta = Mat::Constant(6, 3, dt);
  sel.b_tokens = b.replicate(6, 1);
  sel.c_tokens = c.replicate(6, 1);
  const SsmParameters lti = discretize(a, b.replicate(3, 1), c.replicate(3, 1), dt);
  const Mat x = rand_mat(6, 3, rng);
  CHECK((ssm_scan(sel, x) - ssm_scan(lti, x)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("both forms are causal") {
  std::mt19937_64 rng(6);
  const SsmParameters p = random_lti(2, 4, rng);
  const Mat x = rand_mat(10, 2, rng);
  Mat x2 = x;
  x2.row(6).array() += 1.0;
  for (auto f : {&ssm_scan, &ssm_conv}) {
    const Mat y1 = f(p, x), y2 = f(p, x2);
    CHECK((y1.topRows(6) - y2.topRows(6)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((y1.row(6) - y2.row(6)).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("tokenizer shapes and neighbour pooling") {
  std::mt19937_64 rng(7);
  nn::ParameterStore store;
  nn::Rng init(8);
  Tokenizer tok(store, "t", 6, 3, 5, 4, init);
  Graph g(false);
  const Mat gm = rand_mat(4, 6, rng), cm = rand_mat(8, 3, rng);
  CHECK(tok(g, g.constant(gm), g.constant(cm), 2).rows() == 4);
  CHECK_THROWS_AS(tok(g, g.constant(gm), g.constant(cm), 3), Error);

  // k = 1 with duplicated neighbour rows gives the same tokens as k = 1 alone.
  const Mat c1 = rand_mat(4, 3, rng);
  const Mat single = tok(g, g.constant(gm), g.constant(c1), 1).value();
  Mat dup(8, 3);
  for (int i = 0; i < 4; ++i) dup.row(2 * i) = dup.row(2 * i + 1) = c1.row(i);
  const Mat doubled = tok(g, g.constant(gm), g.constant(dup), 2).value();
  CHECK((single - doubled).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("tokenizer output at the default size") {
  std::mt19937_64 rng(9);
  nn::ParameterStore store;
  nn::Rng init(10);
  Tokenizer tok(store, "t", 128, 64, 128, 128, init);
  Graph g(false);
  const Mat t = tok(g, g.constant(rand_mat(175, 128, rng)), g.constant(rand_mat(175 * 16, 64, rng)), 16).value();
  CHECK(t.rows() == 175);
  CHECK(t.cols() == 128);
}

TEST_CASE("zero-initialised output makes each block and the chain the identity") {
  std::mt19937_64 rng(11);
  for (bool mamba : {true, false}) {
    PssmConfig cfg = small_config(8);
    cfg.mamba = mamba;
    nn::ParameterStore store;
    nn::Rng init(12);
    BlockChain chain(store, cfg, init);
    CHECK(chain.depth() == 7);
    const Mat t = rand_mat(20, 8, rng);
    CHECK((chain.infer(t) - t).cwiseAbs().maxCoeff() == 0.0);
    Graph g(false);
    CHECK((chain(g, g.constant(t)).value() - t).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("depth is restricted to the configured range") {
  for (int d : {6, 7, 8}) CHECK_NOTHROW(validate_depth(d));
  for (int d : {0, 5, 9}) {
    try {
      validate_depth(d);
      FAIL("expected config error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
    }
  }
}

TEST_CASE("state-space initialisation") {
  PssmConfig cfg;
  nn::ParameterStore store;
  nn::Rng init(13);
  MambaBlock block(store, "b", cfg, init);
  const Mat& a_log = store.at("b.a_log").value;
  CHECK(a_log.rows() == 256);
  CHECK(a_log.cols() == 16);
  for (int j = 0; j < 16; ++j) CHECK(std::exp(a_log(0, j)) == doctest::Approx(j + 1.0));
  CHECK(store.at("b.x_dt.weight").value.cols() == 8);
  CHECK(store.at("b.conv.weight").value.rows() == 4);
  const Mat& bias = store.at("b.dt_proj.bias").value;
  for (Eigen::Index i = 0; i < bias.cols(); ++i) {
    const double dt = std::log1p(std::exp(bias(0, i)));
    CHECK(dt >= 1e-3 * (1 - 1e-9));
    CHECK(dt <= 1e-1 * (1 + 1e-9));
  }
  CHECK(store.at("b.out.weight").value.norm() == 0.0);
}

TEST_CASE("a single-token block is finite and shape preserving") {
  std::mt19937_64 rng(14);
  nn::ParameterStore store;
  nn::Rng init(15);
  MambaBlock block(store, "b", small_config(), init);
  randomize_outputs(store, rng);
  Graph g(false);
  const Mat y = block(g, g.constant(rand_mat(1, 4, rng))).value();
  CHECK(y.rows() == 1);
  CHECK(y.cols() == 4);
  CHECK(y.allFinite());
}

TEST_CASE("block input gradients match finite differences") {
  std::mt19937_64 rng(16);
  nn::ParameterStore store;
  nn::Rng init(17);
  MambaBlock block(store, "b", small_config(), init);
  randomize_outputs(store, rng);
  const Mat proj = rand_mat(3, 4, rng);
  const double err = hsnorm::testing::check_inputs({rand_mat(3, 4, rng)}, [&](Graph& g, auto& v) {
    return nn::sum(nn::mul(block(g, v[0]), g.constant(proj)));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("block parameter gradients match finite differences") {
  std::mt19937_64 rng(18);
  nn::ParameterStore store;
  nn::Rng init(19);
  MambaBlock block(store, "b", small_config(), init);
  randomize_outputs(store, rng);
  const Mat x = rand_mat(5, 4, rng), proj = rand_mat(5, 4, rng);
  auto loss = [&](Graph& g) { return nn::sum(nn::mul(block(g, g.constant(x)), g.constant(proj))); };
  CHECK(hsnorm::testing::check_parameters(store, loss) < 1e-4);
}

TEST_CASE("the block chain is causal along the token order") {
  std::mt19937_64 rng(20);
  nn::ParameterStore store;
  nn::Rng init(21);
  BlockChain chain(store, small_config(), init);
  randomize_outputs(store, rng);
  const Mat t = rand_mat(12, 4, rng);
  Mat t2 = t;
  t2.row(7).array() += 0.5;
  const Mat y1 = chain.infer(t), y2 = chain.infer(t2);
  CHECK((y1.topRows(7) - y2.topRows(7)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((y1.row(7) - y2.row(7)).cwiseAbs().maxCoeff() > 0.0);
}
