// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "rgnet/gqm.hpp"
#include "rgnet/nn.hpp"

namespace rgnet {

/// Decoder input: queries padded to P*P slots (slot i*P + j holds pair (i, j)).
/// Diagonal and padding slots are zero with mask 0.
template <typename T>
struct QueryBatch {
  Tensor<T> queries;               // [P*P x q]
  std::vector<std::uint8_t> mask;  // [P*P]
  std::size_t max_persons = 0;

  std::size_t valid_count() const;
};

/// Scatters per-pair queries (PairList order) into the padded layout.
template <typename T>
QueryBatch<T> pad_queries(const Tensor<T>& pair_queries, const PairList& pairs, std::size_t max_persons);

/// Fixed 2-D sinusoidal encoding for an h x w grid: [h*w x width]. The first
/// half of the channels encodes the row, the second half the column.
template <typename T> Tensor<T> positional_encoding(std::size_t h, std::size_t w, std::size_t width);

template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& store, const std::string& name, std::size_t width, std::size_t heads);

  /// queries [n x d], source [m x d] -> [n x d]. `key_mask` (length m) hides
  /// source rows. When `weights_out` is non-null it receives the per-head
  /// attention matrices [n x m].
  Tensor<T> operator()(const ForwardContext<T>& ctx, const Tensor<T>& queries, const Tensor<T>& source,
                       std::span<const std::uint8_t> key_mask = {},
                       std::vector<Tensor<T>>* weights_out = nullptr) const;

  const Linear<T>& value_proj() const { return v_; }
  const Linear<T>& out_proj() const { return o_; }

 private:
  Linear<T> q_, k_, v_, o_;
  std::size_t heads_ = 1;
};

template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParamStore<T>& store, const std::string& name, std::size_t width, std::size_t hidden);
  Tensor<T> operator()(const ForwardContext<T>& ctx, const Tensor<T>& x) const;

 private:
  Linear<T> up_, down_;
};

/// Post-norm encoder layer: x = LN(x + SA(x)); x = LN(x + FF(x)).
template <typename T>
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(ParamStore<T>& store, const std::string& name, std::size_t width, std::size_t heads, std::size_t ffn);
  Tensor<T> operator()(const ForwardContext<T>& ctx, const Tensor<T>& x,
                       std::vector<Tensor<T>>* attention_out = nullptr) const;

  const MultiHeadAttention<T>& self_attention() const { return self_; }
  const FeedForward<T>& feed_forward() const { return ff_; }
  const LayerNorm<T>& norm1() const { return norm1_; }
  const LayerNorm<T>& norm2() const { return norm2_; }

 private:
  MultiHeadAttention<T> self_;
  FeedForward<T> ff_;
  LayerNorm<T> norm1_, norm2_;
};

/// Post-norm decoder layer: masked self-attention over queries, cross-attention
/// to memory, feed-forward.
template <typename T>
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(ParamStore<T>& store, const std::string& name, std::size_t width, std::size_t heads, std::size_t ffn);
  Tensor<T> operator()(const ForwardContext<T>& ctx, const Tensor<T>& queries, std::span<const std::uint8_t> mask,
                       const Tensor<T>& memory) const;

  const MultiHeadAttention<T>& cross_attention() const { return cross_; }

 private:
  MultiHeadAttention<T> self_, cross_;
  FeedForward<T> ff_;
  LayerNorm<T> norm1_, norm2_, norm3_;
};

template <typename T>
class Trm {
 public:
  Trm() = default;
  Trm(ParamStore<T>& store, std::size_t feature_channels, std::size_t query_width, std::size_t width,
      std::size_t heads, std::size_t ffn, std::size_t classes);

  /// Feature map [C_f x H x W] -> memory [H*W x d_m].
  Tensor<T> encode(const ForwardContext<T>& ctx, const Tensor<T>& features) const;
  /// Padded queries -> decoded slots [P*P x d_m].
  Tensor<T> decode(const ForwardContext<T>& ctx, const QueryBatch<T>& batch, const Tensor<T>& memory) const;
  /// Decoded slots -> [P x P x C] scores, symmetrized over the person axes when
  /// requested.
  Tensor<T> classify(const ForwardContext<T>& ctx, const Tensor<T>& decoded, std::size_t max_persons,
                     bool symmetrize) const;

  const EncoderLayer<T>& encoder() const { return encoder_; }
  const Linear<T>& memory_proj() const { return memory_proj_; }

 private:
  Linear<T> memory_proj_;
  Linear<T> query_proj_;
  EncoderLayer<T> encoder_;
  DecoderLayer<T> decoder_;
  Linear<T> head_;
  std::size_t width_ = 0;
};

extern template class Trm<float>;
extern template class Trm<double>;

}  // namespace rgnet
