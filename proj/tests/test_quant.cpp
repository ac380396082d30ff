// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "rgnet/error.hpp"
#include "rgnet/ops.hpp"
#include "rgnet/quant.hpp"
#include "test_util.hpp"

using namespace rgnet;
using namespace rgnet::testing;
using TD = Tensor<double>;

TEST(Scheme, SymmetricActivationRange) {
  const auto s = activation_scheme(-1.0, 1.0);
  EXPECT_EQ(s.scale, 2.0 / 255.0);
  EXPECT_EQ(s.zero_point, static_cast<std::int32_t>(std::nearbyint(-128.0 - (-1.0) / (2.0 / 255.0))));
  EXPECT_EQ(s.zero_point, 0);  // -128 + 127.5 rounds half to even
}

TEST(Scheme, ActivationRangeAlwaysContainsZero) {
  const auto s = activation_scheme(0.5, 2.0);
  EXPECT_EQ(s.scale, 2.0 / 255.0);
  EXPECT_EQ(s.zero_point, -128);
  EXPECT_EQ(quantize_value(0.0, s.scale, s.zero_point), -128);
  EXPECT_THROW(activation_scheme(1.0, -1.0), NumericError);
  EXPECT_THROW(activation_scheme(0.0, INFINITY), NumericError);
}

TEST(Scheme, WeightSchemeFromPeak) {
  const std::vector<double> w{0.3, -1.27, 0.9};
  const auto s = weight_scheme<double>(w);
  EXPECT_EQ(s.scale, 1.27 / 127.0);
  EXPECT_NEAR(s.scale, 0.01, 1e-17);
  EXPECT_EQ(s.zero_point, 0);
}

TEST(Scheme, ZeroTensorUsesScaleFloor) {
  const std::vector<float> w(5, 0.0f);
  EXPECT_EQ(weight_scheme<float>(w).scale, kScaleFloor);
  EXPECT_EQ(activation_scheme(0.0, 0.0).scale, kScaleFloor);
}

TEST(Quantize, HandExamples) {
  const QuantScheme s{0.1, 0, 0, 0};
  const std::vector<double> x{0.5, 20.0, -20.0};
  const auto q = quantize<double>(x, s);
  EXPECT_EQ(q, (std::vector<std::int8_t>{5, 127, -128}));
  const QuantScheme half{0.5, 3, 0, 0};
  // 2.5 -> 2 and 3.5 -> 4 before the zero point is added
  EXPECT_EQ(quantize<double>(std::vector<double>{1.25, 1.75, -1.25}, half), (std::vector<std::int8_t>{5, 7, 1}));
  const auto dq = dequantize<double>(q, s);
  EXPECT_EQ(dq[0], 0.5);
  EXPECT_EQ(dq[1], 127 * 0.1);
  EXPECT_NEAR(dq[1], 12.7, 1e-14);
}

TEST(Quantize, ErrorBoundedByHalfScaleInsideRange) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const double lo = rng.uniform(-5, 0), hi = rng.uniform(0, 5);
    const auto s = activation_scheme(lo, hi);
    std::vector<double> x(5000);
    for (double& v : x) v = rng.uniform(s.range_min(), s.range_max());
    const auto dq = dequantize<double>(quantize<double>(x, s), s);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double level = unclamped_level(x[k], s.scale, s.zero_point);
      if (level < kQuantMin || level > kQuantMax) continue;
      ASSERT_LE(std::fabs(dq[k] - x[k]), s.scale / 2) << x[k];
    }
  }
}

TEST(Quantize, SaturatedValuesClampToRangeEnds) {
  const auto s = activation_scheme(-1.0, 3.0);
  const std::vector<double> x{-100.0, 100.0};
  const auto dq = dequantize<double>(quantize<double>(x, s), s);
  EXPECT_EQ(dq[0], s.range_min());
  EXPECT_EQ(dq[1], s.range_max());
}

TEST(Quantize, RoundTripIsIdempotent) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = activation_scheme(rng.uniform(-3, 0), rng.uniform(0, 3));
    const auto x = random_tensor(rng, {400}, -6, 6);
    const auto once = fake_quant(x, s.scale, s.zero_point);
    const auto twice = fake_quant(once, s.scale, s.zero_point);
    EXPECT_TRUE(bit_equal(once, twice));
  }
}

TEST(FakeQuant, StraightThroughGradient) {
  auto x = TD(Shape{4}, {0.5, 20.0, -0.3, -20.0});
  x.set_requires_grad(true);
  backprop<double>([&] { return sum(fake_quant(x, 0.1, 0)); });
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{1, 0, 1, 0}));
}

TEST(FakeQuant, GenerousRangeStaysWithinHalfScale) {
  Rng rng(3);
  const auto x = random_tensor(rng, {1000}, -1, 1);
  const auto s = activation_scheme(-1.5, 1.5);
  const auto y = fake_quant(x, s.scale, s.zero_point);
  for (std::size_t k = 0; k < x.numel(); ++k) EXPECT_LE(std::fabs(y[k] - x[k]), s.scale / 2);
}

TEST(Observer, FirstBatchInitializesThenEma) {
  ActivationObserver obs;
  EXPECT_FALSE(obs.calibrated());
  EXPECT_THROW(obs.scheme(), ConfigError);
  obs.observe<double>(std::vector<double>{-1.0, 2.0});
  EXPECT_EQ(obs.min(), -1.0);
  EXPECT_EQ(obs.max(), 2.0);
  obs.observe<double>(std::vector<double>{-3.0, 4.0});
  EXPECT_NEAR(obs.min(), 0.99 * -1.0 + 0.01 * -3.0, 1e-15);
  EXPECT_NEAR(obs.max(), 0.99 * 2.0 + 0.01 * 4.0, 1e-15);
  EXPECT_THROW(obs.observe<double>(std::vector<double>{NAN}), NumericError);
}

TEST(Observer, MatchesClosedFormEma) {
  // min_T = d^(T-1) m_1 + sum_{t>=2} (1 - d) d^(T-t) m_t
  Rng rng(4);
  for (int stream = 0; stream < 20; ++stream) {
    ActivationObserver obs;
    std::vector<double> mins, maxs;
    const int batches = 1 + static_cast<int>(rng.below(200));
    for (int b = 0; b < batches; ++b) {
      const auto batch = random_tensor(rng, {1 + rng.below(50)}, -10, 10);
      obs.observe<double>(batch.data());
      mins.push_back(*std::min_element(batch.data().begin(), batch.data().end()));
      maxs.push_back(*std::max_element(batch.data().begin(), batch.data().end()));
    }
    const int n = static_cast<int>(mins.size());
    double ref_min = std::pow(kObserverDecay, n - 1) * mins[0], ref_max = std::pow(kObserverDecay, n - 1) * maxs[0];
    for (int t = 1; t < n; ++t) {
      const double w = (1 - kObserverDecay) * std::pow(kObserverDecay, n - 1 - t);
      ref_min += w * mins[t];
      ref_max += w * maxs[t];
    }
    EXPECT_NEAR(obs.min(), ref_min, 1e-9);
    EXPECT_NEAR(obs.max(), ref_max, 1e-9);
  }
}

TEST(QuantState, UncalibratedSiteIsConfigError) {
  QuantState qat;
  qat.mode = QuantMode::kQat;
  EXPECT_THROW(quant_activation<double>(&qat, TD::zeros({2}), "features"), ConfigError);
  QuantState sim;
  sim.mode = QuantMode::kSimulated;
  EXPECT_THROW(quant_activation<double>(&sim, TD::zeros({2}), "features"), ConfigError);
}

TEST(QuantState, CalibrateObservesWithoutRounding) {
  QuantState st;
  st.mode = QuantMode::kCalibrate;
  const TD x(Shape{3}, {0.123456789, -2.0, 5.0});
  EXPECT_TRUE(bit_equal(quant_activation<double>(&st, x, "a"), x));
  EXPECT_EQ(st.observers.at("a").min(), -2.0);
  EXPECT_EQ(st.activation_schemes().at("a").scale, 7.0 / 255.0);
}

TEST(QuantState, QatFakeQuantizesWeights) {
  QuantState st;
  st.mode = QuantMode::kQat;
  const TD w(Shape{3}, {1.27, 0.004, -0.5});
  const auto q = quant_weight<double>(&st, w);
  EXPECT_EQ(q[0], 127 * (1.27 / 127.0));
  EXPECT_EQ(q[1], 0.0);
  EXPECT_TRUE(bit_equal(quant_weight<double>(nullptr, w), w));
}
