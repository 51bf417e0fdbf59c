#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "avstress/nn.hpp"
#include "support/gradcheck.hpp"

using namespace avstress;

namespace {

// Scalar-loop reference forward pass.
std::vector<double> naive_forward(const NetParams& p, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const DenseLayer& l = p.layers[li];
    std::vector<double> z(l.weight.rows());
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      double acc = l.bias[r];
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) acc += l.weight(r, c) * h[c];
      z[r] = li + 1 < p.layers.size() ? std::tanh(acc) : acc;
    }
    h = z;
  }
  return h;
}

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(-scale, scale);
  }
  return m;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "avstress_nn_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Forward, ZeroNetworkOutputsZero) {
  Rng rng(1);
  NetParams p = make_mlp({25, 16, 5}, rng).zeros_like();
  const Eigen::VectorXd y = forward(p, Eigen::VectorXd(Eigen::VectorXd::Random(25)));
  EXPECT_EQ(y, Eigen::VectorXd::Zero(5));
}

TEST(Forward, SingleLinearLayerIsAffine) {
  Rng rng(2);
  NetParams p = make_mlp({4, 3}, rng);
  p.layers[0].bias = Eigen::Vector3d(0.5, -1, 2);
  const Eigen::VectorXd x = Eigen::Vector4d(1, 2, -3, 0.25);
  EXPECT_EQ(forward(p, x), p.layers[0].weight * x + p.layers[0].bias);
}

TEST(Forward, MatchesScalarLoops) {
  Rng rng(3);
  const NetParams p = make_mlp({25, 16, 16, 5}, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd x = random_matrix(rng, 25, 1, 2.0);
    const Eigen::VectorXd y = forward(p, Eigen::VectorXd(x.col(0)));
    const auto ref = naive_forward(p, std::vector<double>(x.data(), x.data() + 25));
    for (int i = 0; i < 5; ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Forward, BatchColumnsMatchSingleCalls) {
  Rng rng(4);
  const NetParams p = make_mlp({25, 16, 5}, rng);
  const Eigen::MatrixXd x = random_matrix(rng, 25, 7);
  const Eigen::MatrixXd y = forward(p, x);
  for (int c = 0; c < 7; ++c) {
    EXPECT_LT((y.col(c) - forward(p, Eigen::VectorXd(x.col(c)))).norm(), 1e-13);
  }
  EXPECT_EQ(forward(p, x), y);
}

TEST(Forward, DimensionMismatchThrows) {
  Rng rng(5);
  const NetParams p = make_mlp({25, 8, 5}, rng);
  EXPECT_THROW(forward(p, Eigen::VectorXd(Eigen::VectorXd::Zero(24))), DimensionError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(6);
  const NetParams p = make_mlp({25, 16, 16, 5}, rng);
  ForwardCache cache;
  forward(p, random_matrix(rng, 25, 4), &cache);
  const NetParams g = backward(p, cache, Eigen::MatrixXd::Zero(5, 4));
  EXPECT_EQ(g.flat(), Eigen::VectorXd::Zero(p.num_params()));
}

TEST(Backward, LinearBiasGradientEqualsUpstream) {
  Rng rng(7);
  const NetParams p = make_mlp({6, 3}, rng);
  ForwardCache cache;
  const Eigen::MatrixXd x = random_matrix(rng, 6, 1);
  forward(p, x, &cache);
  const Eigen::MatrixXd up = random_matrix(rng, 3, 1);
  const NetParams g = backward(p, cache, up);
  EXPECT_EQ(g.layers[0].bias, Eigen::VectorXd(up.col(0)));
  EXPECT_EQ(g.layers[0].weight, up * x.transpose());
}

TEST(Backward, StaleCacheRejected) {
  Rng rng(8);
  NetParams p = make_mlp({5, 4, 2}, rng);
  ForwardCache cache;
  forward(p, random_matrix(rng, 5, 2), &cache);
  p.layers[0].weight(0, 0) += 1.0;
  EXPECT_THROW(backward(p, cache, Eigen::MatrixXd::Ones(2, 2)), UsageError);
}

TEST(Backward, FiniteDifferenceOnCompositeLoss) {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const NetParams p = make_mlp({25, 16, 16, 5}, rng);
    const Eigen::MatrixXd x = random_matrix(rng, 25, 8);
    const Eigen::MatrixXd target = random_matrix(rng, 5, 8);
    // Mixed loss: squared error on outputs 0..2 plus log-sum-exp of all outputs.
    auto loss = [&](const NetParams& q) {
      const Eigen::MatrixXd y = forward(q, x);
      double l = 0.5 * (y.topRows(3) - target.topRows(3)).squaredNorm();
      for (int c = 0; c < y.cols(); ++c) {
        l += std::log(y.col(c).array().exp().sum());
      }
      return l;
    };
    ForwardCache cache;
    const Eigen::MatrixXd y = forward(p, x, &cache);
    Eigen::MatrixXd up = Eigen::MatrixXd::Zero(5, 8);
    up.topRows(3) = y.topRows(3) - target.topRows(3);
    for (int c = 0; c < 8; ++c) up.col(c) += softmax(Eigen::VectorXd(y.col(c)));
    const NetParams g = backward(p, cache, up);
    const auto result = avstress::testing::grad_check(p, g, loss, rng, 200);
    EXPECT_EQ(result.checked, 200);
    EXPECT_LT(result.max_relative_error, 1e-5);
  }
}

TEST(Adam, ZeroGradientLeavesParamsAndMoments) {
  Rng rng(10);
  NetParams p = make_mlp({4, 3, 2}, rng);
  const NetParams before = p;
  OptState opt = make_opt_state(p, {});
  opt_step(p, p.zeros_like(), opt);
  EXPECT_EQ(p, before);
  EXPECT_EQ(opt.step, 1);
  EXPECT_EQ(opt.m, Eigen::VectorXd::Zero(p.num_params()));
  EXPECT_EQ(opt.v, Eigen::VectorXd::Zero(p.num_params()));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Rng rng(11);
  NetParams p = make_mlp({4, 3, 2}, rng);
  const Eigen::VectorXd before = p.flat();
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  OptState opt = make_opt_state(p, cfg);
  NetParams g = p.zeros_like();
  Eigen::VectorXd gflat(p.num_params());
  for (Eigen::Index i = 0; i < gflat.size(); ++i) gflat[i] = (i % 2 ? 1.0 : -1.0) * (0.1 + i);
  g.assign_flat(gflat);
  opt_step(p, g, opt);
  const Eigen::VectorXd delta = p.flat() - before;
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    EXPECT_NEAR(delta[i], -cfg.learning_rate * (gflat[i] > 0 ? 1.0 : -1.0), 1e-6);
  }
}

TEST(Adam, DeterministicAndRejectsNonFinite) {
  Rng rng(12);
  NetParams a = make_mlp({4, 3, 2}, rng);
  NetParams b = a;
  OptState oa = make_opt_state(a, {}), ob = make_opt_state(b, {});
  NetParams g = a.zeros_like();
  g.layers[0].weight(1, 1) = 0.7;
  opt_step(a, g, oa);
  opt_step(b, g, ob);
  EXPECT_EQ(a, b);
  EXPECT_EQ(oa, ob);

  g.layers[1].bias[0] = std::nan("");
  const NetParams keep = a;
  EXPECT_THROW(opt_step(a, g, oa), NumericError);
  EXPECT_EQ(a, keep);
  EXPECT_EQ(oa.step, 1);
}

TEST(Adam, GradientNormClip) {
  Rng rng(13);
  NetParams p = make_mlp({3, 2}, rng);
  AdamConfig cfg;
  cfg.max_grad_norm = 0.5;
  OptState opt = make_opt_state(p, cfg);
  NetParams g = p.zeros_like();
  g.layers[0].bias = Eigen::Vector2d(30, 40);
  opt_step(p, g, opt);
  // m = (1 - beta1) * clipped gradient with norm 0.5.
  EXPECT_NEAR(opt.m.norm(), 0.1 * 0.5, 1e-12);
}

TEST(Categorical, UniformLogitsSampleUniformly) {
  Rng rng(14);
  const Eigen::VectorXd logits = Eigen::VectorXd::Constant(5, 0.3);
  std::array<int, 5> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) counts[categorical_sample(logits, rng).index]++;
  const double sigma = std::sqrt(n * 0.2 * 0.8);
  for (int c : counts) EXPECT_LT(std::abs(c - 0.2 * n), 3 * sigma);
}

TEST(Categorical, DominantLogit) {
  Rng rng(15);
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(5);
  logits[0] = 50;
  EXPECT_GT(softmax(logits)[0], 1 - 1e-9);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(categorical_sample(logits, rng).index, 0);
}

TEST(Categorical, LogProbMatchesSoftmax) {
  Rng rng(16);
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd logits(5);
    for (int k = 0; k < 5; ++k) logits[k] = rng.uniform(-4, 4);
    const auto s = categorical_sample(logits, rng);
    EXPECT_NEAR(std::exp(s.log_prob), softmax(logits)[s.index], 1e-12);
    const Eigen::VectorXd p = softmax(logits);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GT(p.minCoeff(), 0.0);
  }
}

TEST(Entropy, BoundsAndShiftInvariance) {
  EXPECT_NEAR(entropy(Eigen::VectorXd::Zero(5)), std::log(5.0), 1e-12);
  EXPECT_NEAR(std::log(5.0), 1.60944, 1e-5);
  Eigen::VectorXd sharp = Eigen::VectorXd::Zero(5);
  sharp[2] = 40;
  EXPECT_LT(entropy(sharp), 1e-6);
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd logits(5);
    for (int k = 0; k < 5; ++k) logits[k] = rng.uniform(-3, 3);
    const double c = rng.uniform(-100, 100);
    EXPECT_NEAR(entropy(logits), entropy((logits.array() + c).matrix()), 1e-12);
  }
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax(Eigen::Vector4d(1, 3, 3, 2)), 1);
  EXPECT_EQ(argmax(Eigen::Vector3d(0, 0, 0)), 0);
}

TEST(Encode, ScalesPositionsAndSpeeds) {
  Observation o;
  o.rows[0] = {1, 200, 4, 20, -8};
  const Eigen::VectorXd x = encode_observation(o);
  EXPECT_EQ(x.size(), 25);
  EXPECT_DOUBLE_EQ(x[0], 1);
  EXPECT_DOUBLE_EQ(x[1], 2);
  EXPECT_DOUBLE_EQ(x[2], 0.04);
  EXPECT_DOUBLE_EQ(x[3], 0.5);
  EXPECT_DOUBLE_EQ(x[4], -0.2);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  Rng rng(18);
  Checkpoint c;
  c.role = CheckpointRole::DefenderD3qn;
  c.config_hash = 0xdeadbeefcafeULL;
  c.train_steps = 1234;
  c.params = make_mlp({25, 64, 64, 6}, rng);
  c.opt = make_opt_state(c.params, {});
  c.opt->m.setConstant(0.125);
  c.opt->step = 9;
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(c, path);
  const Checkpoint back = load_checkpoint(path, c.config_hash);
  EXPECT_EQ(back.role, c.role);
  EXPECT_EQ(back.train_steps, 1234);
  EXPECT_EQ(back.params, c.params);
  ASSERT_TRUE(back.opt.has_value());
  EXPECT_EQ(*back.opt, *c.opt);
}

TEST(Checkpoint, TruncatedAndCorruptFilesRejected) {
  Rng rng(19);
  Checkpoint c;
  c.params = make_mlp({5, 4, 2}, rng);
  const auto path = temp_path("truncated.ckpt");
  save_checkpoint(c, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 13);
  EXPECT_THROW(load_checkpoint(path), IntegrityError);

  save_checkpoint(c, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(60);
    f.put('\x7f');
  }
  EXPECT_THROW(load_checkpoint(path), IntegrityError);
  EXPECT_THROW(load_checkpoint(temp_path("missing.ckpt")), ArtifactError);
}

TEST(Checkpoint, HashMismatchNeedsOverride) {
  Rng rng(20);
  Checkpoint c;
  c.config_hash = 1;
  c.params = make_mlp({5, 4, 2}, rng);
  const auto path = temp_path("hash.ckpt");
  save_checkpoint(c, path);
  EXPECT_THROW(load_checkpoint(path, 2), ArtifactError);
  EXPECT_NO_THROW(load_checkpoint(path, 2, true));
  EXPECT_NO_THROW(load_checkpoint(path, 1));
}

TEST(Checkpoint, UnknownVersionRejected) {
  Rng rng(21);
  Checkpoint c;
  c.version = 7;
  c.params = make_mlp({5, 4, 2}, rng);
  const auto path = temp_path("version.ckpt");
  save_checkpoint(c, path);
  EXPECT_THROW(load_checkpoint(path), IntegrityError);
}
