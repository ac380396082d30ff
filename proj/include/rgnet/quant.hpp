// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rgnet/affine_quant.hpp"
#include "rgnet/tensor.hpp"

namespace rgnet {

/// Per-tensor affine INT8 parameters.
struct QuantScheme {
  double scale = 1.0;
  std::int32_t zero_point = 0;
  double observed_min = 0.0;
  double observed_max = 0.0;

  /// Real-valued range representable without clamping.
  double range_min() const { return static_cast<double>(kQuantMin - zero_point) * scale; }
  double range_max() const { return static_cast<double>(kQuantMax - zero_point) * scale; }
};

inline constexpr double kScaleFloor = 1e-8;
inline constexpr double kObserverDecay = 0.99;

/// Symmetric weight scheme: zero_point 0, scale = max|x| / 127.
template <typename T> QuantScheme weight_scheme(std::span<const T> values);

/// Asymmetric min-max scheme over [min, max] widened to contain zero:
/// scale = (max - min) / 255, zero_point = round(-128 - min / scale).
QuantScheme activation_scheme(double min, double max);

/// Min/max tracker with exponential moving averages; the first batch
/// initializes both averages.
class ActivationObserver {
 public:
  explicit ActivationObserver(double decay = kObserverDecay) : decay_(decay) {}

  template <typename T> void observe(std::span<const T> values);

  bool calibrated() const noexcept { return calibrated_; }
  double min() const noexcept { return min_; }
  double max() const noexcept { return max_; }
  QuantScheme scheme() const;

 private:
  double decay_;
  bool calibrated_ = false;
  double min_ = 0.0;
  double max_ = 0.0;
};

template <typename T> std::vector<std::int8_t> quantize(std::span<const T> values, const QuantScheme& scheme);
template <typename T> std::vector<T> dequantize(std::span<const std::int8_t> levels, const QuantScheme& scheme);

enum class QuantMode {
  kOff,
  kCalibrate,  // observe activations, no rounding
  kQat,        // fake-quantize weights (schemes from live weights) and activations, observers keep updating
  kSimulated,  // weights already dequantized; activations fake-quantized with frozen schemes
};

/// Quantization hooks consulted by the forward pass. Activation sites are
/// identified by name.
struct QuantState {
  QuantMode mode = QuantMode::kOff;
  std::map<std::string, ActivationObserver> observers;
  std::map<std::string, QuantScheme> frozen;

  std::map<std::string, QuantScheme> activation_schemes() const;
};

/// Applies the weight hook for the current mode.
template <typename T> Tensor<T> quant_weight(const QuantState* state, const Tensor<T>& weight);
/// Applies the activation hook at `site` for the current mode. Throws
/// ConfigError in QAT or simulated mode when the site was never calibrated.
template <typename T> Tensor<T> quant_activation(QuantState* state, const Tensor<T>& x, const std::string& site);

}  // namespace rgnet
