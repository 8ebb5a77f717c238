#include "advl/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "advl/common.hpp"
#include "test_util.hpp"

using namespace advl;
using testutil::conv2d_ref;
using testutil::matmul_ref;
using testutil::random_tensor;

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double va = a.uniform01();
    EXPECT_EQ(va, b.uniform01());
    EXPECT_GE(va, 0.0);
    EXPECT_LT(va, 1.0);
  }
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 10; ++i) differs |= a2.uniform01() != c.uniform01();
  EXPECT_TRUE(differs);
}

TEST(Rng, NormalMoments) {
  Rng rng(7);
  const int n = 50000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.03);
}

TEST(Rng, BelowIsInRangeAndCoversValues) {
  Rng rng(5);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++seen[v];
  }
  for (int cnt : seen) EXPECT_GT(cnt, 700);
}

TEST(Rng, MixSeedSeparatesStreams) {
  EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
  EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
  EXPECT_EQ(mix_seed(9, 3), mix_seed(9, 3));
}

TEST(Tensor, ShapeAndFill) {
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.shape_str(), "[2x3]");
  Tensor f = Tensor::full({2, 2}, 1.5);
  EXPECT_EQ(advl::sum(f), 6.0);
}

TEST(Tensor, ElementwiseOps) {
  Tensor a({3}, {1.0, -2.0, 3.0});
  Tensor b({3}, {0.5, 0.5, 0.5});
  EXPECT_EQ(add(a, b).data, (std::vector<double>{1.5, -1.5, 3.5}));
  EXPECT_EQ(sub(a, b).data, (std::vector<double>{0.5, -2.5, 2.5}));
  EXPECT_EQ(mul(a, b).data, (std::vector<double>{0.5, -1.0, 1.5}));
  EXPECT_EQ(relu(a).data, (std::vector<double>{1.0, 0.0, 3.0}));
  EXPECT_DOUBLE_EQ(dot(a, b), 1.0);
  Tensor y = b;
  axpy(2.0, a, y);
  EXPECT_EQ(y.data, (std::vector<double>{2.5, -3.5, 6.5}));
  EXPECT_THROW(add(a, Tensor({2})), error);
}

TEST(Tensor, TanhAtanhRoundTrip) {
  Rng rng(11);
  Tensor x = random_tensor({50}, rng, -0.99, 0.99);
  Tensor back = tanh_ew(atanh_ew(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back.data[i], x.data[i], 1e-12);
  Tensor bad({1}, {1.0});
  EXPECT_THROW(atanh_ew(bad), error);
}

TEST(Tensor, ArgmaxTieGoesToLowestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0, 2.0}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{5.0, 5.0}), 0u);
  EXPECT_EQ(argmax(std::vector<double>{-1.0, -1.0, -0.5}), 2u);
}

TEST(Matmul, MatchesReferenceLoop) {
  Rng rng(3);
  const std::size_t dims[][3] = {{1, 1, 1}, {2, 3, 4}, {5, 5, 5}, {7, 13, 3},
                                 {16, 16, 16}, {1, 40, 9}, {23, 1, 17}, {40, 40, 40}};
  for (const auto& d : dims) {
    Tensor a = random_tensor({d[0], d[1]}, rng);
    Tensor b = random_tensor({d[1], d[2]}, rng);
    Tensor fast = matmul(a, b);
    Tensor ref = matmul_ref(a, b);
    ASSERT_EQ(fast.shape, ref.shape);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(fast.data[i], ref.data[i], 1e-12);
  }
}

TEST(Matmul, TransposedVariantsMatchReference) {
  Rng rng(4);
  // C = A^T * B with A [k x m], B [k x n]
  Tensor a = random_tensor({6, 4}, rng);
  Tensor b = random_tensor({6, 5}, rng);
  Tensor c({4, 5});
  matmul_into(a.data.data(), b.data.data(), c.data.data(), 4, 6, 5, true, false);
  Tensor at({4, 6});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) at.data[j * 6 + i] = a.data[i * 4 + j];
  Tensor ref = matmul_ref(at, b);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(c.data[i], ref.data[i], 1e-12);

  // C = A * B^T with A [m x k], B [n x k]
  Tensor a2 = random_tensor({3, 7}, rng);
  Tensor b2 = random_tensor({5, 7}, rng);
  Tensor c2({3, 5});
  matmul_into(a2.data.data(), b2.data.data(), c2.data.data(), 3, 7, 5, false, true);
  Tensor b2t({7, 5});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 7; ++j) b2t.data[j * 5 + i] = b2.data[i * 7 + j];
  Tensor ref2 = matmul_ref(a2, b2t);
  for (std::size_t i = 0; i < ref2.size(); ++i) EXPECT_NEAR(c2.data[i], ref2.data[i], 1e-12);
}

TEST(Matmul, RejectsBadShapes) {
  Tensor a({2, 3}), b({4, 2});
  EXPECT_THROW(matmul(a, b), error);
  EXPECT_THROW(matmul(Tensor({3}), Tensor({3, 1})), error);
}

TEST(Conv2d, MatchesReferenceLoop) {
  Rng rng(9);
  struct Case {
    std::size_t ci, h, w, f, k;
  } cases[] = {{1, 5, 5, 1, 3}, {2, 6, 7, 3, 3}, {3, 9, 9, 4, 3}, {1, 3, 3, 2, 3}, {2, 8, 5, 5, 2}};
  for (const auto& cs : cases) {
    Tensor x = random_tensor({cs.ci, cs.h, cs.w}, rng);
    Tensor k = random_tensor({cs.f, cs.ci, cs.k, cs.k}, rng);
    Tensor b = random_tensor({cs.f}, rng);
    Tensor got = conv2d_forward(x, k, b);
    Tensor ref = conv2d_ref(x, k, b);
    ASSERT_EQ(got.shape, ref.shape);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got.data[i], ref.data[i], 1e-12);
  }
}

TEST(Conv2d, RejectsBadShapes) {
  Tensor x({2, 5, 5}), k({4, 3, 3, 3}), b({4});
  EXPECT_THROW(conv2d_forward(x, k, b), error);  // channel mismatch
  Tensor x2({3, 2, 2});
  EXPECT_THROW(conv2d_forward(x2, k, b), error);  // kernel larger than input
}

TEST(Conv2d, Im2colCol2imAreAdjoint) {
  // <im2col(x), Y> == <x, col2im(Y)> for all x, Y: the scatter-add is the
  // exact transpose of the gather.
  Rng rng(13);
  const std::size_t c = 2, h = 6, w = 5, kh = 3, kw = 3;
  Tensor x = random_tensor({c, h, w}, rng);
  Tensor col = im2col(x, kh, kw);
  Tensor y = random_tensor(col.shape, rng);
  const double lhs = dot(col, y);
  Tensor back = col2im(y, c, h, w, kh, kw);
  const double rhs = dot(x, back);
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Conv2d, BackwardMatchesFiniteDifference) {
  Rng rng(17);
  const std::size_t ci = 2, h = 6, w = 6, f = 3;
  Tensor x = random_tensor({ci, h, w}, rng);
  Tensor k = random_tensor({f, ci, 3, 3}, rng);
  Tensor b = random_tensor({f}, rng);
  Tensor r = random_tensor({f, h - 2, w - 2}, rng);  // fixed cotangent

  Tensor col;
  Tensor out = conv2d_forward(x, k, b, &col);
  Conv2dGrads g = conv2d_backward(r, k, col, x.shape);

  auto objective_x = [&](const std::vector<double>& flat) {
    Tensor xx({ci, h, w});
    xx.data = flat;
    return dot(conv2d_forward(xx, k, b), r);
  };
  EXPECT_LT(testutil::fd_worst_rel(objective_x, x.data, g.input.data), 1e-6);

  auto objective_k = [&](const std::vector<double>& flat) {
    Tensor kk({f, ci, 3, 3});
    kk.data = flat;
    return dot(conv2d_forward(x, kk, b), r);
  };
  EXPECT_LT(testutil::fd_worst_rel(objective_k, k.data, g.kernels.data), 1e-6);

  auto objective_b = [&](const std::vector<double>& flat) {
    Tensor bb({f});
    bb.data = flat;
    return dot(conv2d_forward(x, k, bb), r);
  };
  EXPECT_LT(testutil::fd_worst_rel(objective_b, b.data, g.bias.data), 1e-6);
}

TEST(Maxpool, ForwardAndTies) {
  // 1 channel, 4x4: distinct values pick the true max; an all-equal window
  // picks the first element in row-major order.
  Tensor x({1, 4, 4}, {1, 2, 0, 0,   //
                       3, 4, 0, 0,   //
                       7, 7, 5, 6,   //
                       7, 7, 8, 5});
  std::vector<std::size_t> idx;
  Tensor out = maxpool2x2_forward(x, &idx);
  ASSERT_EQ(out.shape, (std::vector<std::size_t>{1, 2, 2}));
  EXPECT_EQ(out.data, (std::vector<double>{4, 0, 7, 8}));
  EXPECT_EQ(idx[0], 5u);   // value 4 at (1,1)
  EXPECT_EQ(idx[1], 2u);   // tie among four zeros: first in scan order
  EXPECT_EQ(idx[2], 8u);   // tie among four sevens: top-left
  EXPECT_EQ(idx[3], 14u);  // value 8
}

TEST(Maxpool, OddTrailingEdgeIsDropped) {
  Tensor x({1, 3, 5});
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = static_cast<double>(i);
  Tensor out = maxpool2x2_forward(x, nullptr);
  EXPECT_EQ(out.shape, (std::vector<std::size_t>{1, 1, 2}));
  EXPECT_EQ(out.data, (std::vector<double>{6, 8}));
}

TEST(Maxpool, BackwardRoutesToArgmax) {
  Tensor x({1, 2, 2}, {5, 1, 2, 3});
  std::vector<std::size_t> idx;
  maxpool2x2_forward(x, &idx);
  Tensor g({1, 1, 1}, {2.5});
  Tensor dx = maxpool2x2_backward(g, idx, x.shape);
  EXPECT_EQ(dx.data, (std::vector<double>{2.5, 0, 0, 0}));
}

TEST(Maxpool, GradientMatchesFiniteDifference) {
  // Perturbations small enough not to flip the argmax keep pooling linear.
  Rng rng(23);
  Tensor x = random_tensor({2, 4, 4}, rng);
  Tensor r = random_tensor({2, 2, 2}, rng);
  std::vector<std::size_t> idx;
  maxpool2x2_forward(x, &idx);
  Tensor analytic = maxpool2x2_backward(r, idx, x.shape);
  auto objective = [&](const std::vector<double>& flat) {
    Tensor xx({2, 4, 4});
    xx.data = flat;
    return dot(maxpool2x2_forward(xx, nullptr), r);
  };
  EXPECT_LT(testutil::fd_worst_rel(objective, x.data, analytic.data, 1e-7), 1e-6);
}
