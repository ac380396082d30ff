// SPDX-License-Identifier: Apache-2.0
#include "rgnet/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "rgnet/config.hpp"
#include "rgnet/error.hpp"

namespace rgnet {

PersonBox PersonBox::clamped(double x1, double y1, double x2, double y2) {
  auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
  PersonBox b{c(x1), c(y1), c(x2), c(y2)};
  if (!(b.x1 < b.x2) || !(b.y1 < b.y2)) throw DataError("person box corners are not strictly ordered");
  return b;
}

CellRegion box_to_cells(const PersonBox& box, std::size_t h, std::size_t w) {
  auto span = [](double lo, double hi, std::size_t extent) {
    const double n = static_cast<double>(extent);
    auto start = static_cast<std::size_t>(std::clamp(std::floor(lo * n), 0.0, n));
    auto end = static_cast<std::size_t>(std::clamp(std::ceil(hi * n), 0.0, n));
    if (start >= extent) start = extent - 1;
    if (end <= start) end = start + 1;
    return std::pair{start, end};
  };
  const auto [y0, y1] = span(box.y1, box.y2, h);
  const auto [x0, x1] = span(box.x1, box.x2, w);
  return CellRegion{y0, y1, x0, x1};
}

template <typename T>
Stem<T>::Stem(ParamStore<T>& store, std::size_t width, std::size_t out_channels)
    : conv1_w_(store.uniform("stem.conv1.weight", Shape{width, 3, 3, 3}, 27, ParamGroup::kBackbone)),
      conv2_w_(store.uniform("stem.conv2.weight", Shape{out_channels, width, 3, 3}, width * 9, ParamGroup::kBackbone)),
      conv2_b_(store.uniform("stem.conv2.bias", Shape{out_channels}, width * 9, ParamGroup::kBackbone)) {}

template <typename T>
Tensor<T> Stem<T>::operator()(const ForwardContext<T>& ctx, const Tensor<T>& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("stem: expected [3 x H x W] image, got " + to_string(image.shape()));
  if (image.dim(1) % kStemStride != 0 || image.dim(2) % kStemStride != 0) {
    throw ConfigError("stem: image extents " + to_string(image.shape()) + " not divisible by stride " +
                      std::to_string(kStemStride));
  }
  auto x = relu(conv2d(image, ctx.weight(conv1_w_), Tensor<T>{}, 2, 1));
  x = avg_pool2d(x, 2);
  x = relu(conv2d(x, ctx.weight(conv2_w_), ctx.weight(conv2_b_), 1, 1));
  return avg_pool2d(x, 2);
}

template <typename T>
SEGate<T>::SEGate(ParamStore<T>& store, std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels % reduction != 0) {
    throw ConfigError("SE gate: " + std::to_string(channels) + " channels not divisible by reduction " +
                      std::to_string(reduction));
  }
  fc1_ = Linear<T>(store, "se.fc1", channels, channels / reduction, ParamGroup::kRest);
  fc2_ = Linear<T>(store, "se.fc2", channels / reduction, channels, ParamGroup::kRest);
}

template <typename T>
Tensor<T> SEGate<T>::channel_scales(const ForwardContext<T>& ctx, const Tensor<T>& f) const {
  if (f.rank() != 3 || f.dim(0) != channels()) {
    throw ShapeError("SE gate: feature map " + to_string(f.shape()) + " does not have " + std::to_string(channels()) +
                     " channels");
  }
  auto squeezed = reshape(gap(f), Shape{1, f.dim(0)});
  auto excited = fc2_(ctx, relu(fc1_(ctx, squeezed)));
  return reshape(sigmoid(excited), Shape{f.dim(0)});
}

template <typename T>
Tensor<T> SEGate<T>::operator()(const ForwardContext<T>& ctx, const Tensor<T>& f) const {
  const std::size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  // [C] -> [C x HW] by replicating rows of the transposed gate.
  auto gate = transpose(expand_rows(channel_scales(ctx, f), h * w));
  return reshape(mul(reshape(f, Shape{c, h * w}), gate), Shape{c, h, w});
}

template <typename T>
Tensor<T> gap(const Tensor<T>& f) {
  if (f.rank() != 3) throw ShapeError("gap: expected [C x H x W], got " + to_string(f.shape()));
  return mean(f, {1, 2});
}

template <typename T>
Tensor<T> roi_pool(const Tensor<T>& f, const PersonBox& box, std::size_t grid) {
  if (f.rank() != 3) throw ShapeError("roi_pool: expected [C x H x W], got " + to_string(f.shape()));
  return roi_pool(f, box_to_cells(box, f.dim(1), f.dim(2)), grid);
}

template class Stem<float>;
template class Stem<double>;
template class SEGate<float>;
template class SEGate<double>;
template Tensor<float> gap(const Tensor<float>&);
template Tensor<double> gap(const Tensor<double>&);
template Tensor<float> roi_pool(const Tensor<float>&, const PersonBox&, std::size_t);
template Tensor<double> roi_pool(const Tensor<double>&, const PersonBox&, std::size_t);

}  // namespace rgnet
