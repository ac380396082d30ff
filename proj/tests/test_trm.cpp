// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "rgnet/error.hpp"
#include "rgnet/trm.hpp"
#include "test_util.hpp"

using namespace rgnet;
using namespace rgnet::testing;
using TD = Tensor<double>;

TEST(Attention, SingleKeyPassesValueThrough) {
  ParamStore<double> store(1);
  MultiHeadAttention<double> mha(store, "a", 8, 2);
  Rng rng(2);
  const auto q = random_tensor(rng, {3, 8});
  const auto src = random_tensor(rng, {1, 8});
  const ForwardContext<double> ctx;
  const auto out = mha(ctx, q, src);
  const auto expect = mha.out_proj()(ctx, mha.value_proj()(ctx, src));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(out[r * 8 + k], expect[k], 1e-12);
}

TEST(Attention, WeightRowsSumToOne) {
  ParamStore<double> store(3);
  MultiHeadAttention<double> mha(store, "a", 8, 4);
  Rng rng(4);
  std::vector<TD> weights;
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
  mha(ForwardContext<double>{}, random_tensor(rng, {5, 8}, -5, 5), random_tensor(rng, {5, 8}, -5, 5), mask, &weights);
  ASSERT_EQ(weights.size(), 4u);
  for (const auto& w : weights) {
    ASSERT_EQ(w.shape(), (Shape{5, 5}));
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        s += w[r * 5 + c];
        if (!mask[c]) EXPECT_EQ(w[r * 5 + c], 0.0);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Attention, HeadCountMustDivideWidth) {
  ParamStore<double> store(1);
  EXPECT_THROW(MultiHeadAttention<double>(store, "a", 6, 4), ConfigError);
}

TEST(Decoder, PaddingSlotsDoNotLeakIntoValidSlots) {
  ParamStore<double> store(5);
  DecoderLayer<double> dec(store, "d", 8, 2, 16);
  Rng rng(6);
  const auto memory = random_tensor(rng, {4, 8});
  const std::vector<std::uint8_t> mask{0, 1, 1, 0, 0, 1};
  auto a = random_tensor(rng, {6, 8});
  auto b = TD(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
  Rng other(7);
  for (std::size_t r : {0u, 3u, 4u})
    for (std::size_t k = 0; k < 8; ++k) b.mutable_data()[r * 8 + k] = other.uniform(-10, 10);
  const ForwardContext<double> ctx;
  const auto ya = dec(ctx, a, mask, memory), yb = dec(ctx, b, mask, memory);
  for (std::size_t r = 0; r < 6; ++r) {
    if (!mask[r]) continue;
    for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(ya[r * 8 + k], yb[r * 8 + k]);
  }
}

TEST(Decoder, MaskLengthChecked) {
  ParamStore<double> store(5);
  DecoderLayer<double> dec(store, "d", 8, 2, 16);
  const std::vector<std::uint8_t> mask{1, 1};
  EXPECT_THROW(dec(ForwardContext<double>{}, TD::zeros({3, 8}), mask, TD::zeros({1, 8})), ShapeError);
}

TEST(Trm, EncodeDecodeClassifyShapes) {
  ParamStore<double> store(8);
  Trm<double> trm(store, 4, 6, 8, 2, 16, 3);
  Rng rng(9);
  const ForwardContext<double> ctx;
  const auto memory = trm.encode(ctx, random_tensor(rng, {4, 2, 3}));
  EXPECT_EQ(memory.shape(), (Shape{6, 8}));
  const auto pairs = PairList::complete(3);
  const auto batch = pad_queries(random_tensor(rng, {pairs.size(), 6}), pairs, 4);
  EXPECT_EQ(batch.queries.shape(), (Shape{16, 6}));
  EXPECT_EQ(batch.valid_count(), 6u);
  const auto decoded = trm.decode(ctx, batch, memory);
  EXPECT_EQ(decoded.shape(), (Shape{16, 8}));
  const auto scores = trm.classify(ctx, decoded, 4, true);
  EXPECT_EQ(scores.shape(), (Shape{4, 4, 3}));
  EXPECT_THROW(trm.encode(ctx, random_tensor(rng, {5, 2, 3})), ShapeError);
}

TEST(Trm, PadQueriesLayout) {
  const auto pairs = PairList::complete(2);
  const auto batch = pad_queries(TD(Shape{2, 1}, {7, 9}), pairs, 3);
  EXPECT_EQ(values(batch.queries), (std::vector<double>{0, 7, 0, 9, 0, 0, 0, 0, 0}));
  EXPECT_EQ(batch.mask, (std::vector<std::uint8_t>{0, 1, 0, 1, 0, 0, 0, 0, 0}));
  EXPECT_THROW(pad_queries(TD::zeros({12, 1}), PairList::complete(4), 3), DataError);
}

TEST(Trm, PositionalEncodingRowsDiffer) {
  const auto pe = positional_encoding<double>(2, 2, 8);
  EXPECT_EQ(pe.shape(), (Shape{4, 8}));
  // Position (0, 0): sin 0 = 0 and cos 0 = 1 on both halves.
  EXPECT_EQ(std::vector<double>(pe.data().begin(), pe.data().begin() + 8),
            (std::vector<double>{0, 1, 0, 1, 0, 1, 0, 1}));
  EXPECT_THROW(positional_encoding<double>(2, 2, 6), ConfigError);
}

TEST(Symmetrize, HandCases) {
  EXPECT_EQ(values(symmetrize_pairs(TD(Shape{2, 2, 1}, {0, 1, 2, 0}))), (std::vector<double>{0, 3, 3, 0}));
  const TD sym(Shape{2, 2, 2}, {1, 2, 3, 4, 3, 4, 5, 6});
  EXPECT_EQ(values(symmetrize_pairs(sym)), (std::vector<double>{2, 4, 6, 8, 6, 8, 10, 12}));
}

TEST(Symmetrize, OutputIsExactlySymmetric) {
  Rng rng(10);
  for (std::size_t p = 1; p <= 6; ++p) {
    const auto s = symmetrize_pairs(random_tensor(rng, {p, p, 3}));
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(s[(i * p + j) * 3 + k], s[(j * p + i) * 3 + k]);
  }
  EXPECT_THROW(symmetrize_pairs(TD::zeros({2, 3, 1})), ShapeError);
}
