// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace rgnet {

/// Ablation switches. All on reproduces the full model; all off is the
/// baseline pipeline with plain (unweighted) BCE.
struct Toggles {
  bool wbce = true;
  bool bilateral = true;
  bool logit_transform = true;
  bool edge_query = true;
  bool se_block = true;

  bool operator==(const Toggles&) const = default;
};

struct Dims {
  std::size_t image_size = 32;
  std::size_t stem_width = 16;
  std::size_t feature_channels = 32;  // C_f
  std::size_t hidden = 64;            // GQM width d
  std::size_t model_width = 64;       // TRM width d_m
  std::size_t heads = 8;
  std::size_t ffn_width = 128;
  std::size_t roi_grid = 3;
  std::size_t max_persons = 4;  // P: decoder queries are padded to P*P
  std::size_t classes = 6;
  std::size_t gqm_iterations = 2;
  std::size_t se_reduction = 4;

  bool operator==(const Dims&) const = default;
};

enum class OptimizerKind { kAdam, kSgd };
enum class LossForm { kWeightedBce, kLiteral };

struct TrainConfig {
  double lr_backbone = 1e-5;
  double lr_rest = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  LossForm loss_form = LossForm::kWeightedBce;
  std::size_t batch_size = 12;
  std::size_t epochs = 30;
  double dropout = 0.2;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
};

struct ModelConfig {
  Toggles toggles;
  Dims dims;
  TrainConfig train;

  bool operator==(const ModelConfig&) const = default;

  /// Throws ConfigError when dimensions are inconsistent.
  void validate() const;
};

/// Key-value text form, one `section.key = value` per line; '#' starts a
/// comment. Unknown keys are rejected.
ModelConfig parse_config(const std::string& text, ModelConfig base = {});
ModelConfig load_config(const std::filesystem::path& path);
std::string to_config_text(const ModelConfig& config);

/// Stem stride (two stride-2 stages plus a stride-2 first convolution).
inline constexpr std::size_t kStemStride = 8;

}  // namespace rgnet
