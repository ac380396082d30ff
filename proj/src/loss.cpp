// SPDX-License-Identifier: Apache-2.0
#include "rgnet/loss.hpp"

#include <algorithm>
#include <numeric>

#include "rgnet/error.hpp"
#include "rgnet/ops.hpp"

namespace rgnet {

ClassWeights compute_class_weights(std::span<const std::size_t> counts) {
  ClassWeights w;
  w.counts.assign(counts.begin(), counts.end());
  double total = 0.0;
  for (std::size_t n : counts) total += static_cast<double>(n);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw DataError("class " + std::to_string(c) + " has no training pairs; its weight is undefined");
    w.weights.push_back(2.0 * total / static_cast<double>(counts[c]));
  }
  return w;
}

ClassWeights uniform_class_weights(std::size_t classes) {
  ClassWeights w;
  w.counts.assign(classes, 0);
  w.weights.assign(classes, 1.0);
  return w;
}

std::size_t PairMask::count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

PairMask build_mask(std::span<const LabeledPair> labels, std::size_t persons, MaskMode mode) {
  PairMask mask;
  mask.persons = persons;
  mask.active.assign(persons * persons, 0);
  mask.target.assign(persons * persons, -1);
  std::vector<std::uint8_t> seen(persons * persons, 0);
  for (const LabeledPair& l : labels) {
    if (l.i == l.j) throw DataError("self-pair label (" + std::to_string(l.i) + ", " + std::to_string(l.j) + ")");
    if (l.i >= persons || l.j >= persons) {
      throw DataError("label (" + std::to_string(l.i) + ", " + std::to_string(l.j) + ") out of range for " +
                      std::to_string(persons) + " persons");
    }
    const std::size_t a = std::min(l.i, l.j), b = std::max(l.i, l.j);
    if (seen[a * persons + b]) {
      throw DataError("pair (" + std::to_string(a) + ", " + std::to_string(b) + ") labelled more than once");
    }
    seen[a * persons + b] = 1;
    mask.active[l.i * persons + l.j] = 1;
    mask.target[l.i * persons + l.j] = static_cast<int>(l.cls);
    if (mode == MaskMode::kBilateral) {
      mask.active[l.j * persons + l.i] = 1;
      mask.target[l.j * persons + l.i] = static_cast<int>(l.cls);
    }
  }
  return mask;
}

template <typename T>
MaskedScores<T> select_masked(const Tensor<T>& cube, const PairMask& mask) {
  if (cube.rank() != 3 || cube.dim(0) != cube.dim(1)) throw ShapeError("select_masked: expected [P x P x C] scores");
  const std::size_t p = cube.dim(0), c = cube.dim(2);
  if (mask.persons > p) throw ShapeError("select_masked: mask for more persons than the score cube holds");
  MaskedScores<T> out;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.persons; ++i)
    for (std::size_t j = 0; j < mask.persons; ++j)
      if (mask.at(i, j)) {
        rows.push_back(i * p + j);
        out.targets.push_back(static_cast<std::size_t>(mask.target[i * mask.persons + j]));
        out.slots.emplace_back(i, j);
      }
  out.scores = gather_rows(reshape(cube, Shape{p * p, c}), std::span<const std::size_t>(rows));
  return out;
}

template <typename T>
Tensor<T> weighted_bce(const Tensor<T>& scores, std::span<const std::size_t> targets, std::span<const double> weights,
                       LossForm form) {
  if (scores.rank() != 2) throw ShapeError("weighted_bce: expected [S x C] scores, got " + to_string(scores.shape()));
  const std::size_t rows = scores.dim(0), classes = scores.dim(1);
  if (rows == 0) throw DataError("weighted_bce: no masked pairs in batch");
  if (targets.size() != rows) throw ShapeError("weighted_bce: target count does not match score rows");
  if (weights.size() != classes) throw ShapeError("weighted_bce: class weight count does not match score width");
  std::vector<T> pos(rows * classes, T(0)), negw(rows * classes), w(rows * classes);
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= classes) throw DataError("weighted_bce: target class out of range");
    for (std::size_t c = 0; c < classes; ++c) {
      const T y = c == targets[r] ? T(1) : T(0);
      w[r * classes + c] = static_cast<T>(weights[c]);
      pos[r * classes + c] = y;
      negw[r * classes + c] = T(1) - y;
    }
  }
  const Shape shape{rows, classes};
  const Tensor<T> weight(shape, std::move(w)), y(shape, std::move(pos)), one_minus_y(shape, std::move(negw));
  // log(1 - sigmoid(s)) is evaluated as log(sigmoid(-s)).
  const auto log_p = log(sigmoid(scores));
  if (form == LossForm::kLiteral) {
    return scale(sum(mul(weight, mul(y, log_p))), T(1) / static_cast<T>(rows));
  }
  const auto log_q = log(sigmoid(neg(scores)));
  const auto per_class = add(mul(y, log_p), mul(one_minus_y, log_q));
  return scale(sum(mul(weight, per_class)), T(-1) / static_cast<T>(rows));
}

template <typename T>
Tensor<T> weighted_bce(const Tensor<T>& cube, const PairMask& mask, const ClassWeights& weights, LossForm form) {
  const auto selected = select_masked(cube, mask);
  return weighted_bce(selected.scores, selected.targets, weights.weights, form);
}

#define RGNET_INSTANTIATE_LOSS(T)                                                                             \
  template MaskedScores<T> select_masked(const Tensor<T>&, const PairMask&);                                  \
  template Tensor<T> weighted_bce(const Tensor<T>&, std::span<const std::size_t>, std::span<const double>,    \
                                  LossForm);                                                                  \
  template Tensor<T> weighted_bce(const Tensor<T>&, const PairMask&, const ClassWeights&, LossForm);

RGNET_INSTANTIATE_LOSS(float)
RGNET_INSTANTIATE_LOSS(double)

#undef RGNET_INSTANTIATE_LOSS

}  // namespace rgnet
