// SPDX-License-Identifier: Apache-2.0
#include "rgnet/quant.hpp"

#include <algorithm>
#include <cmath>

#include "rgnet/error.hpp"
#include "rgnet/ops.hpp"

namespace rgnet {

template <typename T>
QuantScheme weight_scheme(std::span<const T> values) {
  double peak = 0.0;
  double lo = 0.0, hi = 0.0;
  for (T v : values) {
    const double d = static_cast<double>(v);
    peak = std::max(peak, std::abs(d));
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  QuantScheme s;
  s.scale = std::max(peak / 127.0, kScaleFloor);
  s.zero_point = 0;
  s.observed_min = lo;
  s.observed_max = hi;
  return s;
}

QuantScheme activation_scheme(double min, double max) {
  if (!std::isfinite(min) || !std::isfinite(max) || min > max) {
    throw NumericError("activation_scheme: invalid range [" + std::to_string(min) + ", " + std::to_string(max) + "]");
  }
  const double lo = std::min(min, 0.0);
  const double hi = std::max(max, 0.0);
  QuantScheme s;
  s.scale = std::max((hi - lo) / 255.0, kScaleFloor);
  const double zp = std::nearbyint(static_cast<double>(kQuantMin) - lo / s.scale);
  s.zero_point = static_cast<std::int32_t>(std::clamp(zp, double(kQuantMin), double(kQuantMax)));
  s.observed_min = min;
  s.observed_max = max;
  return s;
}

template <typename T>
void ActivationObserver::observe(std::span<const T> values) {
  if (values.empty()) return;
  double lo = static_cast<double>(values[0]), hi = lo;
  for (T v : values) {
    const double d = static_cast<double>(v);
    if (!std::isfinite(d)) throw NumericError("activation observer saw a non-finite value");
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  if (!calibrated_) {
    min_ = lo;
    max_ = hi;
    calibrated_ = true;
    return;
  }
  min_ = decay_ * min_ + (1.0 - decay_) * lo;
  max_ = decay_ * max_ + (1.0 - decay_) * hi;
}

QuantScheme ActivationObserver::scheme() const {
  if (!calibrated_) throw ConfigError("activation observer has not seen any values");
  return activation_scheme(min_, max_);
}

template <typename T>
std::vector<std::int8_t> quantize(std::span<const T> values, const QuantScheme& scheme) {
  std::vector<std::int8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = quantize_value(static_cast<double>(values[i]), scheme.scale, scheme.zero_point);
  return out;
}

template <typename T>
std::vector<T> dequantize(std::span<const std::int8_t> levels, const QuantScheme& scheme) {
  std::vector<T> out(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i)
    out[i] = static_cast<T>(dequantize_value(levels[i], scheme.scale, scheme.zero_point));
  return out;
}

std::map<std::string, QuantScheme> QuantState::activation_schemes() const {
  std::map<std::string, QuantScheme> out;
  for (const auto& [site, obs] : observers) {
    if (obs.calibrated()) out[site] = obs.scheme();
  }
  return out;
}

template <typename T>
Tensor<T> quant_weight(const QuantState* state, const Tensor<T>& weight) {
  if (state == nullptr || state->mode != QuantMode::kQat) return weight;
  const QuantScheme s = weight_scheme<T>(weight.data());
  return fake_quant(weight, s.scale, s.zero_point);
}

template <typename T>
Tensor<T> quant_activation(QuantState* state, const Tensor<T>& x, const std::string& site) {
  if (state == nullptr) return x;
  switch (state->mode) {
    case QuantMode::kOff: return x;
    case QuantMode::kCalibrate: state->observers[site].observe<T>(x.data()); return x;
    case QuantMode::kQat: {
      auto it = state->observers.find(site);
      if (it == state->observers.end() || !it->second.calibrated()) {
        throw ConfigError("activation site '" + site + "' is not calibrated");
      }
      it->second.observe<T>(x.data());
      const QuantScheme s = it->second.scheme();
      return fake_quant(x, s.scale, s.zero_point);
    }
    case QuantMode::kSimulated: {
      auto it = state->frozen.find(site);
      if (it == state->frozen.end()) throw ConfigError("activation site '" + site + "' has no frozen scheme");
      return fake_quant(x, it->second.scale, it->second.zero_point);
    }
  }
  return x;
}

#define RGNET_INSTANTIATE_QUANT(T)                                                              \
  template QuantScheme weight_scheme<T>(std::span<const T>);                                    \
  template void ActivationObserver::observe<T>(std::span<const T>);                             \
  template std::vector<std::int8_t> quantize<T>(std::span<const T>, const QuantScheme&);        \
  template std::vector<T> dequantize<T>(std::span<const std::int8_t>, const QuantScheme&);      \
  template Tensor<T> quant_weight<T>(const QuantState*, const Tensor<T>&);                      \
  template Tensor<T> quant_activation<T>(QuantState*, const Tensor<T>&, const std::string&);

RGNET_INSTANTIATE_QUANT(float)
RGNET_INSTANTIATE_QUANT(double)

#undef RGNET_INSTANTIATE_QUANT

}  // namespace rgnet
