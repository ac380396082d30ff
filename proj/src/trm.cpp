// SPDX-License-Identifier: Apache-2.0
#include "rgnet/trm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rgnet/error.hpp"
#include "rgnet/ops.hpp"

namespace rgnet {

template <typename T>
std::size_t QueryBatch<T>::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

template <typename T>
QueryBatch<T> pad_queries(const Tensor<T>& pair_queries, const PairList& pairs, std::size_t max_persons) {
  if (pairs.persons > max_persons) {
    throw DataError("image has " + std::to_string(pairs.persons) + " persons, more than the configured maximum " +
                    std::to_string(max_persons));
  }
  if (pair_queries.rank() != 2 || pair_queries.dim(0) != pairs.size()) {
    throw ShapeError("pad_queries: " + to_string(pair_queries.shape()) + " for " + std::to_string(pairs.size()) + " pairs");
  }
  QueryBatch<T> batch;
  batch.max_persons = max_persons;
  batch.mask.assign(max_persons * max_persons, 0);
  std::vector<std::size_t> slots(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    slots[k] = pairs.first[k] * max_persons + pairs.second[k];
    batch.mask[slots[k]] = 1;
  }
  batch.queries = scatter_add_rows(pair_queries, std::span<const std::size_t>(slots), max_persons * max_persons);
  return batch;
}

template <typename T>
Tensor<T> positional_encoding(std::size_t h, std::size_t w, std::size_t width) {
  if (width % 4 != 0) throw ConfigError("positional encoding width must be divisible by 4");
  const std::size_t half = width / 2;
  std::vector<T> pe(h * w * width);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      T* row = pe.data() + (y * w + x) * width;
      for (std::size_t k = 0; k < half / 2; ++k) {
        const double freq = 1.0 / std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(half));
        row[2 * k] = static_cast<T>(std::sin(static_cast<double>(y) * freq));
        row[2 * k + 1] = static_cast<T>(std::cos(static_cast<double>(y) * freq));
        row[half + 2 * k] = static_cast<T>(std::sin(static_cast<double>(x) * freq));
        row[half + 2 * k + 1] = static_cast<T>(std::cos(static_cast<double>(x) * freq));
      }
    }
  return Tensor<T>(Shape{h * w, width}, std::move(pe));
}

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParamStore<T>& store, const std::string& name, std::size_t width,
                                          std::size_t heads)
    : q_(store, name + ".q", width, width, ParamGroup::kRest),
      k_(store, name + ".k", width, width, ParamGroup::kRest),
      v_(store, name + ".v", width, width, ParamGroup::kRest),
      o_(store, name + ".o", width, width, ParamGroup::kRest),
      heads_(heads) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " not divisible by " + std::to_string(heads) + " heads");
  }
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::operator()(const ForwardContext<T>& ctx, const Tensor<T>& queries,
                                            const Tensor<T>& source, std::span<const std::uint8_t> key_mask,
                                            std::vector<Tensor<T>>* weights_out) const {
  const std::size_t width = q_.in_features();
  if (queries.rank() != 2 || queries.dim(1) != width || source.rank() != 2 || source.dim(1) != width) {
    throw ShapeError("attention: inputs " + to_string(queries.shape()) + " / " + to_string(source.shape()) +
                     " for width " + std::to_string(width));
  }
  const std::size_t head_width = width / heads_;
  const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(head_width)));
  const auto q = q_(ctx, queries);
  const auto k = k_(ctx, source);
  const auto v = v_(ctx, source);
  std::vector<Tensor<T>> outputs;
  outputs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const auto qh = slice(q, 1, h * head_width, head_width);
    const auto kh = slice(k, 1, h * head_width, head_width);
    const auto vh = slice(v, 1, h * head_width, head_width);
    const auto weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), key_mask);
    if (weights_out != nullptr) weights_out->push_back(weights);
    outputs.push_back(matmul(weights, vh));
  }
  return o_(ctx, concat(outputs, 1));
}

template <typename T>
FeedForward<T>::FeedForward(ParamStore<T>& store, const std::string& name, std::size_t width, std::size_t hidden)
    : up_(store, name + ".up", width, hidden, ParamGroup::kRest),
      down_(store, name + ".down", hidden, width, ParamGroup::kRest) {}

template <typename T>
Tensor<T> FeedForward<T>::operator()(const ForwardContext<T>& ctx, const Tensor<T>& x) const {
  return down_(ctx, ctx.apply_dropout(relu(up_(ctx, x))));
}

template <typename T>
EncoderLayer<T>::EncoderLayer(ParamStore<T>& store, const std::string& name, std::size_t width, std::size_t heads,
                              std::size_t ffn)
    : self_(store, name + ".self_attn", width, heads),
      ff_(store, name + ".ffn", width, ffn),
      norm1_(store, name + ".norm1", width, ParamGroup::kRest),
      norm2_(store, name + ".norm2", width, ParamGroup::kRest) {}

template <typename T>
Tensor<T> EncoderLayer<T>::operator()(const ForwardContext<T>& ctx, const Tensor<T>& x,
                                      std::vector<Tensor<T>>* attention_out) const {
  auto y = norm1_(ctx, add(x, ctx.apply_dropout(self_(ctx, x, x, {}, attention_out))));
  return norm2_(ctx, add(y, ctx.apply_dropout(ff_(ctx, y))));
}

template <typename T>
DecoderLayer<T>::DecoderLayer(ParamStore<T>& store, const std::string& name, std::size_t width, std::size_t heads,
                              std::size_t ffn)
    : self_(store, name + ".self_attn", width, heads),
      cross_(store, name + ".cross_attn", width, heads),
      ff_(store, name + ".ffn", width, ffn),
      norm1_(store, name + ".norm1", width, ParamGroup::kRest),
      norm2_(store, name + ".norm2", width, ParamGroup::kRest),
      norm3_(store, name + ".norm3", width, ParamGroup::kRest) {}

template <typename T>
Tensor<T> DecoderLayer<T>::operator()(const ForwardContext<T>& ctx, const Tensor<T>& queries,
                                      std::span<const std::uint8_t> mask, const Tensor<T>& memory) const {
  if (!mask.empty() && mask.size() != queries.dim(0)) {
    throw ShapeError("decoder: mask of " + std::to_string(mask.size()) + " for " + std::to_string(queries.dim(0)) +
                     " queries");
  }
  auto x = norm1_(ctx, add(queries, ctx.apply_dropout(self_(ctx, queries, queries, mask))));
  x = norm2_(ctx, add(x, ctx.apply_dropout(cross_(ctx, x, memory))));
  return norm3_(ctx, add(x, ctx.apply_dropout(ff_(ctx, x))));
}

template <typename T>
Trm<T>::Trm(ParamStore<T>& store, std::size_t feature_channels, std::size_t query_width, std::size_t width,
            std::size_t heads, std::size_t ffn, std::size_t classes)
    : memory_proj_(store, "trm.memory_proj", feature_channels, width, ParamGroup::kRest),
      query_proj_(store, "trm.query_proj", query_width, width, ParamGroup::kRest),
      encoder_(store, "trm.encoder", width, heads, ffn),
      decoder_(store, "trm.decoder", width, heads, ffn),
      head_(store, "head", width, classes, ParamGroup::kRest),
      width_(width) {}

template <typename T>
Tensor<T> Trm<T>::encode(const ForwardContext<T>& ctx, const Tensor<T>& features) const {
  if (features.rank() != 3 || features.dim(0) != memory_proj_.in_features()) {
    throw ShapeError("encode: feature map " + to_string(features.shape()) + " does not have " +
                     std::to_string(memory_proj_.in_features()) + " channels");
  }
  const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2);
  const auto tokens = transpose(reshape(features, Shape{c, h * w}));
  const auto projected = add(memory_proj_(ctx, tokens), positional_encoding<T>(h, w, width_));
  return encoder_(ctx, projected);
}

template <typename T>
Tensor<T> Trm<T>::decode(const ForwardContext<T>& ctx, const QueryBatch<T>& batch, const Tensor<T>& memory) const {
  if (batch.queries.rank() != 2 || batch.queries.dim(1) != query_proj_.in_features()) {
    throw ShapeError("decode: queries " + to_string(batch.queries.shape()) + " for query width " +
                     std::to_string(query_proj_.in_features()));
  }
  if (batch.mask.size() != batch.queries.dim(0)) throw ShapeError("decode: mask/query count mismatch");
  return decoder_(ctx, query_proj_(ctx, batch.queries), batch.mask, memory);
}

template <typename T>
Tensor<T> Trm<T>::classify(const ForwardContext<T>& ctx, const Tensor<T>& decoded, std::size_t max_persons,
                           bool symmetrize) const {
  if (decoded.rank() != 2 || decoded.dim(0) != max_persons * max_persons) {
    throw ShapeError("classify: decoded " + to_string(decoded.shape()) + " for " + std::to_string(max_persons) +
                     " persons");
  }
  auto scores = reshape(head_(ctx, decoded), Shape{max_persons, max_persons, head_.out_features()});
  return symmetrize ? symmetrize_pairs(scores) : scores;
}

#define RGNET_INSTANTIATE_TRM(T)                                                                  \
  template struct QueryBatch<T>;                                                                  \
  template QueryBatch<T> pad_queries(const Tensor<T>&, const PairList&, std::size_t);             \
  template Tensor<T> positional_encoding<T>(std::size_t, std::size_t, std::size_t);               \
  template class MultiHeadAttention<T>;                                                           \
  template class FeedForward<T>;                                                                  \
  template class EncoderLayer<T>;                                                                 \
  template class DecoderLayer<T>;                                                                 \
  template class Trm<T>;

RGNET_INSTANTIATE_TRM(float)
RGNET_INSTANTIATE_TRM(double)

#undef RGNET_INSTANTIATE_TRM

}  // namespace rgnet
