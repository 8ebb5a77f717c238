#include "advl/network.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "advl/common.hpp"
#include "test_util.hpp"

using namespace advl;
using testutil::random_tensor;

TEST(Softmax, TwoClassKnownValues) {
  // logits (1, 2) at T = 1: p = (1/(1+e), e/(1+e))
  const auto p = softmax_t({1.0, 2.0}, 1.0);
  EXPECT_NEAR(p[0], 0.2689414213699951, 1e-15);
  EXPECT_NEAR(p[1], 0.7310585786300049, 1e-15);
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
}

TEST(Softmax, HighTemperatureFlattens) {
  // At T = 100 the same logits almost stop mattering; both components land
  // within tanh(0.005)/2 < 0.0025 of one half, order preserved.
  const auto p = softmax_t({1.0, 2.0}, 100.0);
  EXPECT_NEAR(p[0], 0.5, 0.0025);
  EXPECT_NEAR(p[1], 0.5, 0.0025);
  EXPECT_GT(p[1], p[0]);
}

TEST(Softmax, ShiftInvarianceAndOverflowSafety) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(10);
    for (double& v : z) v = rng.uniform(-5, 5);
    const auto p0 = softmax_t(z, 2.5);
    std::vector<double> shifted = z;
    for (double& v : shifted) v += 1234.5;
    const auto p1 = softmax_t(shifted, 2.5);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(p0[i], p1[i], 1e-12);
  }
  // huge logits must not overflow
  const auto p = softmax_t({1000.0, 0.0}, 1.0);
  EXPECT_NEAR(p[0], 1.0, 1e-12);
  const auto lp = log_softmax_t({1000.0, 0.0}, 1.0);
  EXPECT_TRUE(std::isfinite(lp[1]));
  EXPECT_NEAR(lp[1], -1000.0, 1e-9);
}

TEST(Softmax, LogSoftmaxAgreesWithLog) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(7);
    for (double& v : z) v = rng.uniform(-8, 8);
    const double temp = rng.uniform(0.5, 20.0);
    const auto p = softmax_t(z, temp);
    const auto lp = log_softmax_t(z, temp);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(lp[i], std::log(p[i]), 1e-12);
  }
}

TEST(Softmax, RejectsBadTemperature) {
  EXPECT_THROW(softmax_t({1.0, 2.0}, 0.0), error);
  EXPECT_THROW(softmax_t({1.0, 2.0}, -1.0), error);
  EXPECT_THROW(log_softmax_t({1.0}, 0.0), error);
}

TEST(Softmax, BackwardMatchesFiniteDifference) {
  Rng rng(5);
  for (double temp : {1.0, 5.0, 0.7}) {
    std::vector<double> z(6), r(6);
    for (double& v : z) v = rng.uniform(-3, 3);
    for (double& v : r) v = rng.uniform(-1, 1);
    const auto probs = softmax_t(z, temp);
    const auto dz = softmax_backward(probs, r, temp);
    auto objective = [&](const std::vector<double>& zz) {
      const auto p = softmax_t(zz, temp);
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * r[i];
      return s;
    };
    EXPECT_LT(testutil::fd_worst_rel(objective, z, dz), 1e-6);
  }
}

TEST(Network, ShapePlanOfConvStack) {
  // 28x28 gray input: conv pairs and pools land on 4x4 spatial maps before
  // the dense head.
  std::vector<std::size_t> s = {1, 28, 28};
  s = layer_output_shape(LayerSpec::conv(32), s);
  EXPECT_EQ(s, (std::vector<std::size_t>{32, 26, 26}));
  s = layer_output_shape(LayerSpec::conv(32), s);
  EXPECT_EQ(s, (std::vector<std::size_t>{32, 24, 24}));
  s = layer_output_shape(LayerSpec::pool(), s);
  EXPECT_EQ(s, (std::vector<std::size_t>{32, 12, 12}));
  s = layer_output_shape(LayerSpec::conv(64), s);
  s = layer_output_shape(LayerSpec::conv(64), s);
  EXPECT_EQ(s, (std::vector<std::size_t>{64, 8, 8}));
  s = layer_output_shape(LayerSpec::pool(), s);
  EXPECT_EQ(s, (std::vector<std::size_t>{64, 4, 4}));
}

TEST(Network, BuildValidatesFinalLayer) {
  EXPECT_THROW(build_network({4}, 3, {LayerSpec::dense(8)}, 1.0, 1), error);
  EXPECT_THROW(build_network({4}, 3, {LayerSpec::logits(5)}, 1.0, 1), error);
  Network ok = build_network({4}, 3, {LayerSpec::dense(8), LayerSpec::logits(3)}, 1.0, 1);
  EXPECT_EQ(ok.layers.size(), 2u);
  EXPECT_EQ(ok.param_count(), 4u * 8 + 8 + 8 * 3 + 3);
}

TEST(Network, SeededInitIsReproducible) {
  Network a = make_tiny_net({1, 8, 8}, 3, 1.0, 77);
  Network b = make_tiny_net({1, 8, 8}, 3, 1.0, 77);
  Network c = make_tiny_net({1, 8, 8}, 3, 1.0, 78);
  ASSERT_EQ(a.layers.size(), b.layers.size());
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    EXPECT_EQ(a.layers[i].weights.data, b.layers[i].weights.data);
  bool differs = false;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    differs |= a.layers[i].weights.data != c.layers[i].weights.data;
  EXPECT_TRUE(differs);
}

TEST(Network, ForwardRejectsWrongInputShape) {
  Network net = make_tiny_net({1, 8, 8}, 3, 1.0, 1);
  EXPECT_THROW(forward_logits(net, Tensor({1, 7, 7})), error);
}

TEST(Network, MnistProfileForwardShape) {
  Network net = make_mnist_net(1.0, 123);
  Tensor x({1, 28, 28});
  Rng rng(4);
  for (double& v : x.data) v = rng.uniform01();
  Tensor z = forward_logits(net, x);
  EXPECT_EQ(z.shape, (std::vector<std::size_t>{10}));
  for (double v : z.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Network, ReluSubgradientAtZeroIsZero) {
  // One dense-ReLU layer with zero weights and zero bias: pre-activation is
  // exactly 0, so nothing may flow back to the input.
  Network net = build_network({3}, 2, {LayerSpec::dense(4), LayerSpec::logits(2)}, 1.0, 1);
  for (double& v : net.layers[0].weights.data) v = 0.0;
  for (double& v : net.layers[0].bias.data) v = 0.0;
  Tensor x({3}, {0.3, -0.4, 0.9});
  ForwardTrace trace;
  forward_logits(net, x, &trace);
  Tensor dl({2}, {1.0, -1.0});
  Tensor dx = backward(net, trace, dl, nullptr);
  for (double v : dx.data) EXPECT_EQ(v, 0.0);
}

TEST(Network, InputGradientMatchesFiniteDifference) {
  // Randomized cases over both tiny profiles and a few objectives.
  Rng rng(31);
  for (int trial = 0; trial < 6; ++trial) {
    const bool conv = trial % 2 == 0;
    Network net = conv ? make_tiny_net({1, 8, 8}, 3, 1.0, 100 + trial)
                       : make_tiny_net({10}, 4, 1.0, 200 + trial);
    Tensor x = conv ? random_tensor({1, 8, 8}, rng, 0.05, 0.95) : random_tensor({10}, rng, 0.05, 0.95);
    std::vector<double> r(net.classes);
    for (double& v : r) v = rng.uniform(-1, 1);
    auto objective = [&](const std::vector<double>& z, std::vector<double>& dz) {
      dz = r;
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) s += z[i] * r[i];
      return s;
    };
    auto [loss, grad] = input_gradient(net, x, objective);
    auto scalar = [&](const std::vector<double>& flat) {
      Tensor xx(x.shape);
      xx.data = flat;
      const Tensor z = forward_logits(net, xx);
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) s += z.data[i] * r[i];
      return s;
    };
    EXPECT_LT(testutil::fd_worst_rel(scalar, x.data, grad.data), 1e-5) << "trial " << trial;
    EXPECT_NEAR(loss, scalar(x.data), 1e-10);
  }
}

TEST(Network, PredictReturnsArgmaxClass) {
  Network net = make_tiny_net({6}, 3, 1.0, 9);
  Tensor x({6}, {0.1, 0.9, 0.2, 0.8, 0.5, 0.3});
  const Tensor z = forward_logits(net, x);
  EXPECT_EQ(predict(net, x), argmax(z));
  const auto p = predict_probs(net, x);
  double s = 0.0;
  for (double v : p) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
}
