// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rgnet/nn.hpp"
#include "rgnet/ops.hpp"

namespace rgnet {

/// Person bounding box in normalized corner form.
struct PersonBox {
  double x1 = 0, y1 = 0, x2 = 1, y2 = 1;

  /// Clamps each coordinate to [0, 1]; throws DataError unless the result is
  /// strictly ordered.
  static PersonBox clamped(double x1, double y1, double x2, double y2);

  bool operator==(const PersonBox&) const = default;
};

/// Maps a normalized box onto an h x w cell grid: floor for the start, ceil
/// for the end, at least one cell per axis.
CellRegion box_to_cells(const PersonBox& box, std::size_t h, std::size_t w);

/// Trainable stand-in for a pretrained backbone:
/// conv3x3/2 (no bias) -> relu -> avgpool2 -> conv3x3 -> relu -> avgpool2.
/// Output extents are the input extents divided by kStemStride.
template <typename T>
class Stem {
 public:
  Stem() = default;
  Stem(ParamStore<T>& store, std::size_t width, std::size_t out_channels);

  /// image [3 x H x W] -> feature map [C_f x H/8 x W/8]
  Tensor<T> operator()(const ForwardContext<T>& ctx, const Tensor<T>& image) const;

  const Tensor<T>& conv2_bias() const { return conv2_b_; }

 private:
  Tensor<T> conv1_w_;
  Tensor<T> conv2_w_;
  Tensor<T> conv2_b_;
};

/// Squeeze-and-excitation channel gate: f * sigmoid(fc2(relu(fc1(gap(f))))).
template <typename T>
class SEGate {
 public:
  SEGate() = default;
  SEGate(ParamStore<T>& store, std::size_t channels, std::size_t reduction);

  Tensor<T> operator()(const ForwardContext<T>& ctx, const Tensor<T>& f) const;
  /// Per-channel gate values in (0, 1).
  Tensor<T> channel_scales(const ForwardContext<T>& ctx, const Tensor<T>& f) const;

  std::size_t channels() const { return fc1_.in_features(); }

 private:
  Linear<T> fc1_;
  Linear<T> fc2_;
};

/// Global average pooling: [C x H x W] -> [C].
template <typename T> Tensor<T> gap(const Tensor<T>& f);

/// RoI pooling of one person box: [C x H x W] -> [C * k * k].
template <typename T> Tensor<T> roi_pool(const Tensor<T>& f, const PersonBox& box, std::size_t grid);

extern template class Stem<float>;
extern template class Stem<double>;
extern template class SEGate<float>;
extern template class SEGate<double>;

}  // namespace rgnet
