// SPDX-License-Identifier: Apache-2.0
#include "rgnet/nn.hpp"

#include <algorithm>
#include <cmath>

#include "rgnet/error.hpp"
#include "rgnet/ops.hpp"

namespace rgnet {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Tensor<T> t, ParamGroup group) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  params_.push_back({name, t, group});
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::uniform(const std::string& name, Shape shape, std::size_t fan_in, ParamGroup group) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<T> values(numel(shape));
  for (T& v : values) v = static_cast<T>(rng_.uniform(-bound, bound));
  return add(name, Tensor<T>(std::move(shape), std::move(values)), group);
}

template <typename T>
Tensor<T> ParamStore<T>::constant(const std::string& name, Shape shape, T value, ParamGroup group) {
  return add(name, Tensor<T>::full(std::move(shape), value), group);
}

template <typename T>
const Parameter<T>* ParamStore<T>::find(const std::string& name) const {
  auto it = std::find_if(params_.begin(), params_.end(), [&](const Parameter<T>& p) { return p.name == name; });
  return it == params_.end() ? nullptr : &*it;
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

template <typename T>
Tensor<T> ForwardContext<T>::apply_dropout(const Tensor<T>& x) const {
  if (!training || dropout <= 0.0) return x;
  Rng rng(mix_seed(dropout_seed, dropout_calls_++));
  const T keep_scale = static_cast<T>(1.0 / (1.0 - dropout));
  std::vector<T> mask(x.numel());
  for (T& m : mask) m = rng.bernoulli(dropout) ? T(0) : keep_scale;
  return mul(x, Tensor<T>(x.shape(), std::move(mask)));
}

template <typename T>
Linear<T>::Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, ParamGroup group)
    : weight_(store.uniform(name + ".weight", Shape{in, out}, in, group)),
      bias_(store.uniform(name + ".bias", Shape{out}, in, group)) {}

template <typename T>
Tensor<T> Linear<T>::operator()(const ForwardContext<T>& ctx, const Tensor<T>& x) const {
  if (x.rank() != 2 || x.dim(1) != weight_.dim(0)) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " for weight " + to_string(weight_.shape()));
  }
  return add(matmul(x, ctx.weight(weight_)), expand_rows(ctx.weight(bias_), x.dim(0)));
}

template <typename T>
LayerNorm<T>::LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t width, ParamGroup group)
    : gain_(store.constant(name + ".gain", Shape{width}, T(1), group)),
      bias_(store.constant(name + ".bias", Shape{width}, T(0), group)) {}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const ForwardContext<T>& ctx, const Tensor<T>& x) const {
  return layer_norm(x, ctx.weight(gain_), ctx.weight(bias_));
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template struct ForwardContext<float>;
template struct ForwardContext<double>;

}  // namespace rgnet
