// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "rgnet/error.hpp"
#include "rgnet/gradcheck.hpp"
#include "test_util.hpp"

using namespace rgnet;
using namespace rgnet::testing;
using TD = Tensor<double>;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(TD(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  TD t(Shape{2, 3}, std::vector<double>(6, 1.0));
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, MatmulIdentity) {
  TD eye(Shape{2, 2}, {1, 0, 0, 1});
  TD m(Shape{2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(eye, m)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Tensor, MatmulHand) {
  TD a(Shape{1, 2}, {1, 0});
  TD b(Shape{2, 1}, {2, 5});
  EXPECT_EQ(values(matmul(a, b)), (std::vector<double>{2}));
}

TEST(Tensor, MatmulShapeErrorNamesBothShapes) {
  TD a = TD::zeros({2, 3}), b = TD::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3] and [4x5]"), std::string::npos) << e.what();
  }
}

TEST(Tensor, MatmulMatchesTripleLoop) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor(rng, {4, 3}).set_requires_grad(true);
    auto b = random_tensor(rng, {3, 5}).set_requires_grad(true);
    auto r = random_tensor(rng, {4, 5});
    TD c;
    backprop<double>([&] {
      c = matmul(a, b);
      return sum(mul(c, r));
    });
    std::vector<double> c_ref(20, 0.0), da(12, 0.0), db(15, 0.0);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 5; ++j)
        for (int k = 0; k < 3; ++k) c_ref[i * 5 + j] += a[i * 3 + k] * b[k * 5 + j];
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 3; ++k)
        for (int j = 0; j < 5; ++j) da[i * 3 + k] += r[i * 5 + j] * b[k * 5 + j];
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 4; ++i) db[k * 5 + j] += a[i * 3 + k] * r[i * 5 + j];
    EXPECT_LE(max_rel_error(values(c), c_ref), 1e-6);
    EXPECT_LE(max_rel_error({a.grad().begin(), a.grad().end()}, da), 1e-6);
    EXPECT_LE(max_rel_error({b.grad().begin(), b.grad().end()}, db), 1e-6);
  }
}

TEST(Tensor, ElementwiseHandCases) {
  EXPECT_EQ(values(relu(TD(Shape{2}, {2, -1}))), (std::vector<double>{2, 0}));
  EXPECT_EQ(sigmoid(TD::scalar(0.0)).item(), 0.5);
  EXPECT_EQ(values(neg(TD(Shape{2}, {1, -3}))), (std::vector<double>{-1, 3}));
  EXPECT_EQ(values(add(TD(Shape{2}, {1, 2}), TD(Shape{2}, {3, 4}))), (std::vector<double>{4, 6}));
  EXPECT_EQ(values(mul(TD(Shape{2}, {1, 2}), TD(Shape{2}, {3, 4}))), (std::vector<double>{3, 8}));
  EXPECT_THROW(add(TD::zeros({2}), TD::zeros({3})), ShapeError);
}

TEST(Tensor, LogClampsAndBlocksGradient) {
  auto x = TD(Shape{3}, {0.0, -1.0, 2.0}).set_requires_grad(true);
  TD y;
  backprop<double>([&] {
    y = log(x);
    return sum(y);
  });
  EXPECT_EQ(y[0], std::log(kLogEpsilon));
  EXPECT_EQ(y[1], std::log(kLogEpsilon));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 0.5);
}

TEST(Tensor, ReluGradientOnlyForPositiveInputs) {
  auto x = TD(Shape{3}, {1.5, -0.5, 0.0}).set_requires_grad(true);
  backprop<double>([&] { return sum(relu(x)); });
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 0, 0}));
}

TEST(Tensor, ConcatAndSoftmaxHandCases) {
  EXPECT_EQ(values(concat<double>({TD(Shape{2}, {1, 2}), TD(Shape{2}, {3, 4})}, 0)),
            (std::vector<double>{1, 2, 3, 4}));
  const auto s = softmax(TD(Shape{1, 3}, {0, 0, 0}));
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  EXPECT_THROW(concat<double>({TD::zeros({2}), TD::zeros({2})}, 1), ShapeError);
  EXPECT_THROW(sum(TD::zeros({2, 2}), {2}), ShapeError);
  EXPECT_THROW(slice(TD::zeros({2, 2}), 1, 1, 2), ShapeError);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor(rng, {4, 7}, -20, 20);
    const auto s = softmax(x);
    for (int r = 0; r < 4; ++r) {
      double total = 0.0;
      for (int c = 0; c < 7; ++c) total += s[r * 7 + c];
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Tensor, SoftmaxMaskedEntriesAreExactlyZero) {
  const std::vector<std::uint8_t> mask{1, 0, 1};
  const auto s = softmax(TD(Shape{2, 3}, {1, 50, 2, 0, 0, 0}), mask);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_EQ(s[4], 0.0);
  EXPECT_NEAR(s[0] + s[2], 1.0, 1e-15);
  const std::vector<std::uint8_t> none{0, 0, 0};
  const auto hidden = softmax(TD(Shape{1, 3}, {1, 2, 3}), none);
  for (double v : hidden.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, ReductionsMatchLoopOracleExactly) {
  Rng rng(5);
  auto x = random_tensor(rng, {3, 4, 5});
  const auto s = sum(x, {1});
  const auto m = mean(x, {0, 2});
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 5; ++k) {
      double acc = 0.0;
      for (int j = 0; j < 4; ++j) acc += x[(i * 4 + j) * 5 + k];
      EXPECT_EQ(s[i * 5 + k], acc);
    }
  for (int j = 0; j < 4; ++j) {
    double acc = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 5; ++k) acc += x[(i * 4 + j) * 5 + k];
    EXPECT_EQ(m[j], acc / 15.0);
  }
  double total = 0.0;
  for (double v : x.data()) total += v;
  EXPECT_EQ(sum(x).item(), total);
  EXPECT_EQ(mean(x).item(), total / 60.0);
}

TEST(Tensor, DiamondGraphAccumulatesBothPaths) {
  auto x = TD(Shape{2}, {1.5, -2.0}).set_requires_grad(true);
  backprop<double>([&] {
    const auto shared = mul(x, x);
    return sum(add(shared, scale(shared, 3.0)));
  });
  EXPECT_DOUBLE_EQ(x.grad()[0], 4 * 2 * 1.5);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4 * 2 * -2.0);
}

TEST(Tensor, GradientsAccumulateAcrossBackwardCalls) {
  auto x = TD(Shape{1}, {3.0}).set_requires_grad(true);
  backprop<double>([&] { return sum(scale(x, 2.0)); });
  backprop<double>([&] { return sum(scale(x, 2.0)); });
  EXPECT_EQ(x.grad()[0], 4.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Tensor, TapeReplaysInReverseOrder) {
  Tape tape;
  std::vector<int> order;
  tape.record([&] { order.push_back(1); });
  tape.record([&] { order.push_back(2); });
  tape.record([&] { order.push_back(3); });
  tape.backward(TD::scalar(0.0).set_requires_grad(true));
  EXPECT_EQ(order, (std::vector<int>{3, 2, 1}));
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tensor, NothingRecordedWithoutActiveTape) {
  auto x = TD(Shape{2}, {1, 2}).set_requires_grad(true);
  Tape tape;
  (void)relu(x);
  EXPECT_EQ(tape.size(), 0u);
  {
    TapeScope scope(tape);
    (void)relu(x);
  }
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Tensor, RepeatedForwardBackwardIsBitIdentical) {
  auto run = [] {
    Rng rng(99);
    auto a = random_tensor(rng, {5, 6}).set_requires_grad(true);
    auto b = random_tensor(rng, {6, 4}).set_requires_grad(true);
    const auto out = backprop<double>([&] { return sum(softmax(matmul(a, b))); });
    std::vector<double> all = values(out);
    all.insert(all.end(), a.grad().begin(), a.grad().end());
    all.insert(all.end(), b.grad().begin(), b.grad().end());
    return all;
  };
  const auto first = run(), second = run();
  EXPECT_TRUE(bit_equal<double>(first, second));
}

TEST(Tensor, ScatterAddIsOrderIndependent) {
  Rng rng(8);
  auto x = random_tensor(rng, {6, 3});
  const std::vector<std::size_t> idx{2, 0, 2, 1, 2, 0};
  const auto a = scatter_add_rows(x, idx, 3);
  // Same rows listed in a different order.
  const std::vector<std::size_t> perm{5, 3, 4, 0, 1, 2};
  std::vector<std::size_t> idx2;
  for (auto p : perm) idx2.push_back(idx[p]);
  const auto b = scatter_add_rows(gather_rows(x, perm), idx2, 3);
  EXPECT_TRUE(bit_equal(a, b));
}

TEST(Tensor, EveryOpPassesFiniteDifferenceCheck) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (const auto& r : run_gradient_suite(seed)) EXPECT_TRUE(r.passed()) << r.name << " " << r.relative_error;
  }
}
