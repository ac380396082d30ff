// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rgnet/quant.hpp"
#include "rgnet/rng.hpp"
#include "rgnet/tensor.hpp"

namespace rgnet {

/// Learning-rate group. The backbone stem trains at its own (lower) rate.
enum class ParamGroup { kBackbone, kRest };

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  ParamGroup group;
};

/// Owns every trainable tensor in creation order. Initialization draws from
/// one seeded stream, so the same seed and config give identical weights.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  /// Uniform in +-1/sqrt(fan_in).
  Tensor<T> uniform(const std::string& name, Shape shape, std::size_t fan_in, ParamGroup group);
  Tensor<T> constant(const std::string& name, Shape shape, T value, ParamGroup group);

  std::vector<Parameter<T>>& params() noexcept { return params_; }
  const std::vector<Parameter<T>>& params() const noexcept { return params_; }
  const Parameter<T>* find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  Tensor<T> add(const std::string& name, Tensor<T> t, ParamGroup group);
  Rng rng_;
  std::vector<Parameter<T>> params_;
};

/// Per-call forward settings: train/eval mode, dropout stream, quantization
/// hooks.
template <typename T>
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  std::uint64_t dropout_seed = 0;
  QuantState* quant = nullptr;

  Tensor<T> weight(const Tensor<T>& w) const { return quant_weight(quant, w); }
  Tensor<T> activation(const Tensor<T>& x, const std::string& site) const { return quant_activation(quant, x, site); }
  /// Inverted dropout; identity outside training.
  Tensor<T> apply_dropout(const Tensor<T>& x) const;

 private:
  mutable std::uint64_t dropout_calls_ = 0;
};

/// y = x W + b with W stored [in x out].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, ParamGroup group);

  Tensor<T> operator()(const ForwardContext<T>& ctx, const Tensor<T>& x) const;

  const Tensor<T>& weight() const { return weight_; }
  const Tensor<T>& bias() const { return bias_; }
  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t width, ParamGroup group);

  Tensor<T> operator()(const ForwardContext<T>& ctx, const Tensor<T>& x) const;

 private:
  Tensor<T> gain_;
  Tensor<T> bias_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class LayerNorm<float>;
extern template class LayerNorm<double>;
extern template struct ForwardContext<float>;
extern template struct ForwardContext<double>;

}  // namespace rgnet
