// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rgnet/trainer.hpp"

namespace rgnet {

/// Runs eval-mode forwards over `data` with observers at every activation
/// site. Leaves `quant` in calibrate mode with the observers filled.
void calibrate(const Model<float>& model, const Dataset& data, QuantState& quant);

struct QuantizedTensor {
  std::string name;
  Shape shape;
  std::vector<std::int8_t> levels;
  QuantScheme scheme;
};

/// INT8 parameters with their schemes, frozen activation schemes and the
/// architecture config.
struct QuantizedModel {
  ModelConfig config;
  std::vector<QuantizedTensor> params;
  std::map<std::string, QuantScheme> activations;

  Checkpoint to_checkpoint() const;
  static QuantizedModel from_checkpoint(const Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const;
  static QuantizedModel load(const std::filesystem::path& path);

  /// Model whose weights are the dequantized INT8 values.
  Model<float> dequantized_model() const;
  /// Simulated-INT8 hooks using the frozen activation schemes.
  QuantState simulated_state() const;
};

/// Throws ConfigError when an activation site was never calibrated.
QuantizedModel export_quantized(const Model<float>& model, const QuantState& quant);

/// Simulated-INT8 evaluation (fake-quantized activations, dequantized weights).
EvalResult evaluate_quantized(const QuantizedModel& qmodel, const Dataset& data, MaskMode mode);

struct SizeReport {
  std::size_t parameters = 0;
  std::size_t fp32_payload_bytes = 0;
  std::size_t int8_payload_bytes = 0;
  std::size_t fp32_file_bytes = 0;
  std::size_t int8_file_bytes = 0;

  double payload_ratio() const;
  double file_ratio() const;
};

SizeReport size_report(const Model<float>& model, const QuantizedModel& qmodel);

struct QuantizeOptions {
  std::size_t qat_epochs = 3;
  double qat_lr_scale = 0.1;  // fine-tuning learning rates relative to the config
  MaskMode eval_mode = MaskMode::kUnilateral;
};

struct QuantizeReport {
  MetricsReport fp32;
  MetricsReport int8;
  SizeReport size;
  QuantizedModel qmodel;
};

/// Calibrates on `train`, fine-tunes with fake quantization, exports, and
/// compares FP32 (before fine-tuning) with simulated INT8 on `test`.
/// `state` ends up holding the fine-tuned FP32 weights.
QuantizeReport quantize_model(TrainState& state, const Dataset& train, const Dataset& test,
                              const QuantizeOptions& options);

std::string format_quantize_table(const QuantizeReport& report);
std::string format_quantize_key_values(const QuantizeReport& report);

}  // namespace rgnet
