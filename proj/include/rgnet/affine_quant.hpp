// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

// Scalar affine INT8 mapping shared by the fake-quant op and the quantizer.

namespace rgnet {

inline constexpr std::int32_t kQuantMin = -128;
inline constexpr std::int32_t kQuantMax = 127;

/// round(x / scale) + zero_point before clamping. nearbyint honours the
/// default round-to-nearest-even mode.
inline double unclamped_level(double x, double scale, std::int32_t zero_point) {
  return std::nearbyint(x / scale) + static_cast<double>(zero_point);
}

inline std::int8_t quantize_value(double x, double scale, std::int32_t zero_point) {
  const double level = std::clamp(unclamped_level(x, scale, zero_point), double(kQuantMin), double(kQuantMax));
  return static_cast<std::int8_t>(level);
}

inline double dequantize_value(std::int8_t q, double scale, std::int32_t zero_point) {
  return static_cast<double>(static_cast<std::int32_t>(q) - zero_point) * scale;
}

}  // namespace rgnet
