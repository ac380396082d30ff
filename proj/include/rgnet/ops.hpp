// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rgnet/tensor.hpp"

// Differentiable operations. Every op records a backward step on the active
// tape when at least one input requires a gradient. No implicit broadcasting:
// operands of binary ops must have identical shapes; row/column replication is
// spelled out with expand_rows.

namespace rgnet {

/// Lower clamp applied to log() inputs.
inline constexpr double kLogEpsilon = 1e-12;

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> neg(const Tensor<T>& x);
/// scalar * tensor
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
/// Natural log of max(x, kLogEpsilon). Clamped entries get zero gradient.
template <typename T> Tensor<T> log(const Tensor<T>& x);

/// [m x k] * [k x n] -> [m x n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// Reduces the listed axes (which are removed from the result shape).
template <typename T> Tensor<T> sum(const Tensor<T>& x, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> mean(const Tensor<T>& x, const std::vector<std::size_t>& axes);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

/// Softmax over the last axis. With `key_mask` (one flag per last-axis entry),
/// masked entries get probability exactly zero; a row with no unmasked entry
/// yields all zeros.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::span<const std::uint8_t> key_mask = {});

/// [m] -> [rows x m]
template <typename T> Tensor<T> expand_rows(const Tensor<T>& x, std::size_t rows);
/// out[r] = x[index[r]] for a rank-2 x.
template <typename T> Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> index);
/// out[index[r]] += x[r], out has `rows` rows. Contributions landing on the
/// same output element are summed in ascending value order, so the result does
/// not depend on the order in which rows are listed.
template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& x, std::span<const std::size_t> index, std::size_t rows);

/// 2-D convolution of [Cin x H x W] with weights [Cout x Cin x K x K]; zero
/// padding. `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding);
/// Non-overlapping average pooling over window x window blocks.
template <typename T> Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t window);

/// Half-open cell range of a feature map.
struct CellRegion {
  std::size_t y0, y1, x0, x1;
};

/// Adaptive average pooling of `region` of a [C x H x W] map onto a grid x grid
/// lattice; flattened channel-major to [C * grid * grid]. Bin b of a span of L
/// cells covers [floor(b*L/grid), ceil((b+1)*L/grid)).
template <typename T> Tensor<T> roi_pool(const Tensor<T>& x, const CellRegion& region, std::size_t grid);

/// Normalizes each row of [n x m] and applies gain/bias of shape [m].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5));

/// quantize -> dequantize with straight-through gradient: identity inside the
/// representable range, zero where the input was clamped.
template <typename T>
Tensor<T> fake_quant(const Tensor<T>& x, double scale, std::int32_t zero_point);

/// For [P x P x C] scores: out[i][j][c] = out[j][i][c] = m[i][j][c] + m[j][i][c].
/// Each sum is computed once and written to both slots.
template <typename T> Tensor<T> symmetrize_pairs(const Tensor<T>& m);

}  // namespace rgnet
