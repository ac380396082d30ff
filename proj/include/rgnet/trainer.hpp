// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rgnet/checkpoint.hpp"
#include "rgnet/dataset.hpp"
#include "rgnet/loss.hpp"
#include "rgnet/metrics.hpp"
#include "rgnet/model.hpp"

namespace rgnet {

/// Everything needed to continue a run: weights, Adam moments, counters and
/// the frozen class weights. Shuffling and dropout streams are derived from
/// (seed, epoch, step), so no generator state has to be stored.
struct TrainState {
  explicit TrainState(const ModelConfig& config);

  Model<float> model;
  std::vector<std::vector<double>> adam_m;
  std::vector<std::vector<double>> adam_v;
  std::size_t epoch = 0;
  std::size_t step = 0;
  double best_map = -1.0;
  std::vector<double> class_weights;  // empty until the first train() call

  const ModelConfig& config() const { return model.config(); }

  Checkpoint to_checkpoint() const;
  static TrainState from_checkpoint(const Checkpoint& ckpt);
  void save(const std::filesystem::path& path) const;
  static TrainState load(const std::filesystem::path& path);
};

/// FP32 parameters plus config, no optimizer state.
Checkpoint model_checkpoint(const Model<float>& model);
Model<float> model_from_checkpoint(const Checkpoint& ckpt);
ModelConfig config_from_checkpoint(const Checkpoint& ckpt);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double loss = 0.0;
  double map = 0.0;
  double accuracy = 0.0;
  std::vector<std::optional<double>> recalls;
};

/// One JSON object per line: {"epoch", "loss", "mAP", "recalls", "accuracy"}.
std::string to_json_line(const EpochLog& log);

struct TrainOptions {
  std::size_t epochs = 0;             // epochs to run in this call
  const Dataset* eval = nullptr;      // per-epoch metrics; the training set when null
  bool evaluate_each_epoch = true;
  QuantState* quant = nullptr;        // QAT hooks
  double lr_scale = 1.0;              // multiplies both learning-rate groups
  std::function<void(const EpochLog&)> on_epoch;
};

/// Runs `options.epochs` more epochs. Images with fewer than two persons are
/// skipped. Throws NumericError if the loss becomes non-finite.
std::vector<EpochLog> train(TrainState& state, const Dataset& data, const TrainOptions& options);

struct EvalResult {
  std::vector<EvalRecord> records;
  MetricsReport report;
};

/// Eval-mode forward over every image; records follow the mask of `mode`.
EvalResult evaluate(const Model<float>& model, const Dataset& data, MaskMode mode, QuantState* quant = nullptr);

/// Class weights for the split: (2 / n_c) * sum n when weighting is on, all
/// ones otherwise.
ClassWeights training_class_weights(const Dataset& data, bool weighted);

}  // namespace rgnet
