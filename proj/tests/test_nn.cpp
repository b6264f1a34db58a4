#include <gtest/gtest.h>

#include "leap/error.hpp"
#include "leap/nn.hpp"
#include "oracles.hpp"

using namespace leap;
using namespace leap::nn;

namespace {

TEST(Forward, IdentityAndRelu) {
  DenseNet id(3, {{3, Activation::identity}}, 1);
  auto& l = id.mutable_layers()[0];
  l.weight = Matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  l.bias.assign(3, 0.0);
  const Matrix x(2, 3, {1, -2, 3, 4, 5, -6});
  EXPECT_EQ(id.predict(x), x);

  DenseNet relu(2, {{2, Activation::relu}}, 1);
  auto& r = relu.mutable_layers()[0];
  r.weight = Matrix(2, 2, {1, 0, 0, 1});
  r.bias.assign(2, 0.0);
  EXPECT_EQ(relu.predict(Matrix(1, 2, {-1, 2})), Matrix(1, 2, {0, 2}));
}

TEST(Forward, MatchesDenseOracle) {
  DenseNet net(5, {{7, Activation::relu}, {3, Activation::identity}}, 42);
  const Matrix x = oracle::random_matrix(6, 5, 2);
  const auto& L = net.layers();
  Matrix h = oracle::matmul(x, L[0].weight);
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) = std::max(0.0, h(i, j) + L[0].bias[j]);
  Matrix y = oracle::matmul(h, L[1].weight);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += L[1].bias[j];
  const Matrix got = net.predict(x);
  for (std::size_t k = 0; k < y.size(); ++k) EXPECT_NEAR(got.flat()[k], y.flat()[k], 1e-12);
}

TEST(Backward, ZeroGradAndStaleCache) {
  DenseNet net(4, {{5, Activation::relu}, {2, Activation::identity}}, 3);
  ForwardCache cache;
  const Matrix x = oracle::random_matrix(3, 4, 1);
  net.forward(x, false, &cache);
  const auto g = net.backward(cache, Matrix(3, 2));
  for (const auto& l : g.layers) {
    for (double v : l.weight.flat()) EXPECT_EQ(v, 0.0);
    for (double v : l.bias) EXPECT_EQ(v, 0.0);
  }
  net.mutable_layers();
  EXPECT_THROW(net.backward(cache, Matrix(3, 2)), ValidationError);
}

TEST(Backward, LinearClosedForm) {
  DenseNet net(4, {{1, Activation::identity}}, 9);
  const Matrix x = oracle::random_matrix(10, 4, 5);
  const Matrix y = oracle::random_matrix(10, 1, 6);
  ForwardCache cache;
  const Matrix yhat = net.forward(x, false, &cache);
  const auto g = net.backward(cache, mse_grad(yhat, y));
  for (std::size_t j = 0; j < 4; ++j) {
    double expected = 0;
    for (std::size_t i = 0; i < 10; ++i) expected += 2.0 * x(i, j) * (yhat(i, 0) - y(i, 0)) / 10.0;
    EXPECT_NEAR(g.layers[0].weight(j, 0), expected, 1e-12);
  }
}

TEST(GradCheck, FreshNetsLinearAndMutation) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    DenseNet net(6, {{5, Activation::relu}, {3, Activation::identity}, {6, Activation::identity}}, seed);
    EXPECT_LT(grad_check(net, oracle::random_matrix(4, 6, seed), oracle::random_matrix(4, 6, seed + 50)), 1e-4);
  }
  DenseNet lin(5, {{3, Activation::identity}}, 1);
  EXPECT_LT(grad_check(lin, oracle::random_matrix(6, 5, 1), oracle::random_matrix(6, 3, 2)), 1e-8);

  GradCheckOptions flip;
  flip.mutate_analytic = [](Gradients& g) {
    for (auto& l : g.layers)
      for (auto& v : l.weight.flat()) v = -v;
  };
  EXPECT_GT(grad_check(lin, oracle::random_matrix(6, 5, 1), oracle::random_matrix(6, 3, 2), flip), 1e-1);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  DenseNet net(3, {{2, Activation::identity}}, 1);
  const DenseNet before = net;
  auto state = AdamState::for_net(net, {});
  Gradients g;
  g.layers.push_back({Matrix(3, 2), std::vector<double>(2, 0.0)});
  adam_step(net, g, state);
  EXPECT_EQ(net.layers()[0].weight, before.layers()[0].weight);
  EXPECT_EQ(net.layers()[0].bias, before.layers()[0].bias);
}

TEST(Adam, FirstStepClosedForm) {
  DenseNet net(2, {{1, Activation::identity}}, 1);
  const DenseNet before = net;
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  auto state = AdamState::for_net(net, cfg);
  Gradients g;
  g.layers.push_back({Matrix(2, 1, {0.5, -3.0}), {1e-9}});
  adam_step(net, g, state);
  // t=1: m_hat = g, v_hat = g^2, delta = -lr * g / (|g| + eps)
  auto delta = [&](double gr) { return -cfg.learning_rate * gr / (std::abs(gr) + cfg.epsilon); };
  EXPECT_NEAR(net.layers()[0].weight(0, 0) - before.layers()[0].weight(0, 0), delta(0.5), 1e-15);
  EXPECT_NEAR(net.layers()[0].weight(1, 0) - before.layers()[0].weight(1, 0), delta(-3.0), 1e-15);
  EXPECT_NEAR(net.layers()[0].bias[0] - before.layers()[0].bias[0], delta(1e-9), 1e-15);
}

TEST(Adam, ConvexDescent) {
  DenseNet net(4, {{2, Activation::identity}}, 7);
  const Matrix x = oracle::random_matrix(32, 4, 1);
  const Matrix y = oracle::random_matrix(32, 2, 2);
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  auto state = AdamState::for_net(net, cfg);
  std::vector<double> losses;
  for (int step = 0; step < 200; ++step) {
    ForwardCache c;
    const Matrix yhat = net.forward(x, true, &c);
    losses.push_back(mse_loss(yhat, y));
    adam_step(net, net.backward(c, mse_grad(yhat, y)), state);
  }
  for (std::size_t i = 50; i < losses.size(); ++i) EXPECT_LT(losses[i], losses[i - 50]);
}

TEST(Adam, NonFiniteGradientAborts) {
  DenseNet net(2, {{1, Activation::identity}}, 1);
  auto state = AdamState::for_net(net, {});
  Gradients g;
  g.layers.push_back({Matrix(2, 1, {std::nan(""), 0.0}), {0.0}});
  EXPECT_THROW(adam_step(net, g, state), NumericalError);
}

TEST(Dropout, InvertedScalingKeepsExpectation) {
  DenseNet net(1, {{2000, Activation::identity, 0.2}}, 5);
  auto& l = net.mutable_layers()[0];
  l.weight = Matrix(1, 2000, 1.0);
  l.bias.assign(2000, 0.0);
  double sum = 0;
  int zeros = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix out = net.forward(Matrix(1, 1, {1.0}), true);
    for (double v : out.flat()) {
      sum += v;
      zeros += v == 0.0;
    }
  }
  const double n = 2000.0 * 50;
  EXPECT_NEAR(sum / n, 1.0, 0.01);
  EXPECT_NEAR(zeros / n, 0.2, 0.01);
  EXPECT_EQ(net.predict(Matrix(1, 1, {1.0})), Matrix(1, 2000, 1.0));
}

TEST(Serialize, NetRoundTrip) {
  DenseNet net(4, {{3, Activation::relu, 0.1}, {2, Activation::identity}}, 11);
  BinaryWriter w;
  net.write(w);
  BinaryReader r(w.bytes());
  EXPECT_TRUE(DenseNet::read(r) == net);
}

}  // namespace
