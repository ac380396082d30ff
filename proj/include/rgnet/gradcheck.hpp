// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rgnet/tensor.hpp"

namespace rgnet {

inline constexpr double kGradCheckStep = 1e-4;
inline constexpr double kGradCheckTolerance = 1e-3;

struct GradCheckResult {
  std::string name;
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
  std::size_t coordinates = 0;
  bool passed(double tolerance = kGradCheckTolerance) const { return relative_error <= tolerance; }
};

/// Compares reverse-mode gradients of the scalar `loss` with central finite
/// differences over every coordinate of `inputs`. `loss` is called once under
/// a tape and then repeatedly without one.
GradCheckResult check_gradients(const std::string& name, const std::function<Tensor<double>()>& loss,
                                const std::vector<Tensor<double>>& inputs, double step = kGradCheckStep);

/// Every differentiable op, each module and the full pipeline at tiny sizes,
/// with inputs drawn from `seed`.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed);

}  // namespace rgnet
