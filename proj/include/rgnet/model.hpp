// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rgnet/backbone.hpp"
#include "rgnet/config.hpp"
#include "rgnet/gqm.hpp"
#include "rgnet/trm.hpp"

namespace rgnet {

/// Names of the activation sites the quantizer intercepts, in forward order.
inline constexpr const char* kActivationSites[] = {"features", "queries", "memory", "decoded"};

template <typename T>
struct ModelOutput {
  Tensor<T> scores;                 // [P x P x C], P = dims.max_persons
  std::vector<std::uint8_t> valid;  // [P * P], 1 for i != j with i, j < persons
  std::size_t persons = 0;
};

/// Full relation pipeline: stem -> SE -> GAP / RoI -> graph queries ->
/// transformer -> pair scores. Parameters that a toggle disables (the SE
/// gate) are not created.
template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  /// Throws DataError for fewer than two persons (the caller skips the image)
  /// or more than dims.max_persons.
  ModelOutput<T> forward(const ForwardContext<T>& ctx, const Tensor<T>& image,
                         std::span<const PersonBox> persons) const;

  const ModelConfig& config() const noexcept { return config_; }
  ParamStore<T>& store() noexcept { return store_; }
  const ParamStore<T>& store() const noexcept { return store_; }

  /// Overwrites parameter values by name; every parameter must be present
  /// with a matching element count.
  void load_values(const std::vector<std::pair<std::string, std::vector<double>>>& values);

 private:
  ModelConfig config_;
  ParamStore<T> store_;
  Stem<T> stem_;
  SEGate<T> se_;
  Gqm<T> gqm_;
  Trm<T> trm_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace rgnet
