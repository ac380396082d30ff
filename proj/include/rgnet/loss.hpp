// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rgnet/config.hpp"
#include "rgnet/tensor.hpp"

namespace rgnet {

/// w_c = (2 / n_c) * sum_k n_k.
struct ClassWeights {
  std::vector<std::size_t> counts;
  std::vector<double> weights;
};

/// Throws DataError when any count is zero.
ClassWeights compute_class_weights(std::span<const std::size_t> counts);
/// All-ones weights (weighting disabled).
ClassWeights uniform_class_weights(std::size_t classes);

enum class MaskMode { kUnilateral, kBilateral };

/// Annotated pair: person indices and relation class.
struct LabeledPair {
  std::size_t i = 0, j = 0, cls = 0;
};

/// Which ordered pairs of one image contribute to loss and metrics.
struct PairMask {
  std::size_t persons = 0;
  std::vector<std::uint8_t> active;  // persons x persons
  std::vector<int> target;           // class per active slot, -1 elsewhere

  bool at(std::size_t i, std::size_t j) const { return active[i * persons + j] != 0; }
  std::size_t count() const;
};

/// Unilateral keeps the annotated direction only; bilateral adds the reverse
/// direction with the same class. Throws DataError for self-pairs, indices out
/// of range, or two labels for the same unordered pair.
PairMask build_mask(std::span<const LabeledPair> labels, std::size_t persons, MaskMode mode);

/// Rows of a [P x P x C] score cube selected by a mask, in row-major slot order.
template <typename T>
struct MaskedScores {
  Tensor<T> scores;  // [S x C]
  std::vector<std::size_t> targets;
  std::vector<std::pair<std::size_t, std::size_t>> slots;
};

template <typename T> MaskedScores<T> select_masked(const Tensor<T>& cube, const PairMask& mask);

/// Mean over rows of -sum_c w_c [y_c log p_c + (1 - y_c) log(1 - p_c)] with
/// p = sigmoid(score); log inputs are clamped to kLogEpsilon. The literal form
/// computes sum_c w_c y_c log p_c instead. Throws DataError for zero rows.
template <typename T>
Tensor<T> weighted_bce(const Tensor<T>& scores, std::span<const std::size_t> targets,
                       std::span<const double> weights, LossForm form = LossForm::kWeightedBce);

template <typename T>
Tensor<T> weighted_bce(const Tensor<T>& cube, const PairMask& mask, const ClassWeights& weights,
                       LossForm form = LossForm::kWeightedBce);

}  // namespace rgnet
