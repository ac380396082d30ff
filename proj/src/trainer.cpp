// SPDX-License-Identifier: Apache-2.0
#include "rgnet/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "rgnet/error.hpp"
#include "rgnet/ops.hpp"
#include "rgnet/rng.hpp"

namespace rgnet {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348u;
constexpr std::uint64_t kDropoutStream = 0x4452u;

MaskMode train_mask_mode(const ModelConfig& c) {
  return c.toggles.bilateral ? MaskMode::kBilateral : MaskMode::kUnilateral;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(mix_seed(seed, kShuffleStream), epoch));
  for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
  return order;
}

void init_moments(TrainState& s) {
  s.adam_m.clear();
  s.adam_v.clear();
  for (const auto& p : s.model.store().params()) {
    s.adam_m.emplace_back(p.value.numel(), 0.0);
    s.adam_v.emplace_back(p.value.numel(), 0.0);
  }
}

void optimizer_step(TrainState& s, double lr_scale) {
  const TrainConfig& tc = s.config().train;
  const double t = static_cast<double>(s.step + 1);
  const double c1 = 1.0 - std::pow(tc.beta1, t), c2 = 1.0 - std::pow(tc.beta2, t);
  auto& params = s.model.store().params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.value.has_grad()) continue;
    const double lr = lr_scale * (p.group == ParamGroup::kBackbone ? tc.lr_backbone : tc.lr_rest);
    auto values = p.value.mutable_data();
    const auto grad = p.value.grad();
    if (tc.optimizer == OptimizerKind::kSgd) {
      for (std::size_t e = 0; e < values.size(); ++e) values[e] = static_cast<float>(values[e] - lr * grad[e]);
      continue;
    }
    auto& m = s.adam_m[k];
    auto& v = s.adam_v[k];
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double g = grad[e];
      m[e] = tc.beta1 * m[e] + (1.0 - tc.beta1) * g;
      v[e] = tc.beta2 * v[e] + (1.0 - tc.beta2) * g * g;
      const double update = lr * (m[e] / c1) / (std::sqrt(v[e] / c2) + tc.adam_eps);
      values[e] = static_cast<float>(values[e] - update);
    }
  }
}

double require_scalar(const Checkpoint& c, const std::string& name) {
  if (!c.contains(name)) throw DataError("checkpoint has no '" + name + "' record");
  return c.scalar(name);
}

}  // namespace

TrainState::TrainState(const ModelConfig& config) : model(config, config.train.seed) { init_moments(*this); }

Checkpoint model_checkpoint(const Model<float>& model) {
  Checkpoint c;
  c.add_text("config", to_config_text(model.config()));
  for (const auto& p : model.store().params()) c.add_tensor(p.name, p.value);
  return c;
}

ModelConfig config_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.contains("config")) throw DataError("checkpoint has no 'config' record");
  return parse_config(ckpt.text("config"));
}

Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig config = config_from_checkpoint(ckpt);
  Model<float> model(config, config.train.seed);
  std::vector<std::pair<std::string, std::vector<double>>> values;
  for (const auto& p : model.store().params()) {
    if (!ckpt.contains(p.name)) throw DataError("checkpoint has no parameter '" + p.name + "'");
    values.emplace_back(p.name, ckpt.floats(p.name));
  }
  model.load_values(values);
  return model;
}

Checkpoint TrainState::to_checkpoint() const {
  Checkpoint c = model_checkpoint(model);
  const auto& params = model.store().params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Shape& shape = params[k].value.shape();
    c.add_float64("adam.m." + params[k].name, shape, adam_m[k]);
    c.add_float64("adam.v." + params[k].name, shape, adam_v[k]);
  }
  const double counters[] = {static_cast<double>(epoch), static_cast<double>(step), best_map};
  c.add_float64("state.epoch", Shape{}, std::span(counters, 1));
  c.add_float64("state.step", Shape{}, std::span(counters + 1, 1));
  c.add_float64("state.best_map", Shape{}, std::span(counters + 2, 1));
  c.add_float64("state.class_weights", Shape{class_weights.size()}, class_weights);
  return c;
}

TrainState TrainState::from_checkpoint(const Checkpoint& ckpt) {
  TrainState s(config_from_checkpoint(ckpt));
  s.model = model_from_checkpoint(ckpt);
  const auto& params = s.model.store().params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (auto [prefix, dst] : {std::pair{"adam.m.", &s.adam_m[k]}, std::pair{"adam.v.", &s.adam_v[k]}}) {
      const std::string name = prefix + params[k].name;
      if (!ckpt.contains(name)) throw DataError("checkpoint has no optimizer record '" + name + "'");
      *dst = ckpt.floats(name);
      if (dst->size() != params[k].value.numel()) throw DataError("optimizer record '" + name + "' has wrong size");
    }
  }
  s.epoch = static_cast<std::size_t>(require_scalar(ckpt, "state.epoch"));
  s.step = static_cast<std::size_t>(require_scalar(ckpt, "state.step"));
  s.best_map = require_scalar(ckpt, "state.best_map");
  if (ckpt.contains("state.class_weights")) s.class_weights = ckpt.floats("state.class_weights");
  return s;
}

void TrainState::save(const std::filesystem::path& path) const { to_checkpoint().save(path); }

TrainState TrainState::load(const std::filesystem::path& path) { return from_checkpoint(Checkpoint::load(path)); }

std::string to_json_line(const EpochLog& log) {
  nlohmann::ordered_json j;
  j["epoch"] = log.epoch;
  j["loss"] = log.loss;
  j["mAP"] = log.map;
  nlohmann::ordered_json recalls = nlohmann::ordered_json::array();
  for (const auto& r : log.recalls) {
    if (r) recalls.push_back(*r);
    else recalls.push_back(nullptr);
  }
  j["recalls"] = recalls;
  j["accuracy"] = log.accuracy;
  return j.dump();
}

ClassWeights training_class_weights(const Dataset& data, bool weighted) {
  if (!weighted) return uniform_class_weights(data.classes);
  std::vector<std::size_t> counts(data.classes, 0);
  for (const auto& im : data.images)
    for (const auto& r : im.relations) ++counts.at(r.cls);
  return compute_class_weights(counts);
}

std::vector<EpochLog> train(TrainState& state, const Dataset& data, const TrainOptions& options) {
  const ModelConfig& config = state.config();
  if (data.images.empty()) throw DataError("training split is empty");
  if (data.classes != config.dims.classes) {
    throw ConfigError("dataset has " + std::to_string(data.classes) + " classes, model expects " +
                      std::to_string(config.dims.classes));
  }
  if (state.class_weights.empty()) state.class_weights = training_class_weights(data, config.toggles.wbce).weights;
  ClassWeights weights;
  weights.weights = state.class_weights;

  std::vector<std::size_t> usable;
  std::vector<PairMask> masks(data.images.size());
  for (std::size_t k = 0; k < data.images.size(); ++k) {
    const auto& im = data.images[k];
    if (im.persons.size() < 2 || im.relations.empty()) continue;
    masks[k] = build_mask(im.relations, im.persons.size(), train_mask_mode(config));
    usable.push_back(k);
  }
  if (usable.empty()) throw DataError("no training image has two persons and a labelled pair");

  const std::size_t batch = std::max<std::size_t>(config.train.batch_size, 1);
  std::vector<EpochLog> history;
  for (std::size_t e = 0; e < options.epochs; ++e) {
    const auto order = epoch_order(config.train.seed, state.epoch, usable.size());
    double loss_sum = 0.0;
    std::size_t slot_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::size_t slots = 0;
      for (std::size_t b = start; b < end; ++b) slots += masks[usable[order[b]]].count();
      state.model.store().zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t index = usable[order[b]];
        const auto& im = data.images[index];
        const PairMask& mask = masks[index];
        const double share = static_cast<double>(mask.count()) / static_cast<double>(slots);
        Tape tape;
        Tensor<float> scaled;
        double image_loss = 0.0;
        {
          TapeScope scope(tape);
          ForwardContext<float> ctx;
          ctx.training = true;
          ctx.dropout = config.train.dropout;
          ctx.dropout_seed = mix_seed(mix_seed(mix_seed(config.train.seed, kDropoutStream), state.step), index);
          ctx.quant = options.quant;
          const auto out = state.model.forward(ctx, im.image, im.persons);
          const auto loss = weighted_bce(out.scores, mask, weights, config.train.loss_form);
          image_loss = static_cast<double>(loss.item());
          scaled = scale(loss, static_cast<float>(share));
        }
        if (!std::isfinite(image_loss)) {
          throw NumericError("loss became " + std::to_string(image_loss) + " at epoch " + std::to_string(state.epoch + 1) +
                             ", step " + std::to_string(state.step) + ", image '" + im.id + "'");
        }
        tape.backward(scaled);
        batch_loss += image_loss * share;
      }
      optimizer_step(state, options.lr_scale);
      ++state.step;
      loss_sum += batch_loss * static_cast<double>(slots);
      slot_sum += slots;
    }
    ++state.epoch;

    EpochLog log;
    log.epoch = state.epoch;
    log.loss = loss_sum / static_cast<double>(slot_sum);
    if (options.evaluate_each_epoch) {
      const Dataset& eval_set = options.eval != nullptr ? *options.eval : data;
      const auto result = evaluate(state.model, eval_set, MaskMode::kUnilateral);
      log.map = result.report.map.map;
      log.accuracy = result.report.accuracy;
      log.recalls = result.report.recall;
      state.best_map = std::max(state.best_map, log.map);
    }
    if (options.on_epoch) options.on_epoch(log);
    history.push_back(std::move(log));
  }
  state.model.store().zero_grad();
  return history;
}

EvalResult evaluate(const Model<float>& model, const Dataset& data, MaskMode mode, QuantState* quant) {
  if (data.images.empty()) throw DataError("evaluation split is empty");
  const std::size_t classes = model.config().dims.classes;
  EvalResult result;
  for (const auto& im : data.images) {
    if (im.persons.size() < 2 || im.relations.empty()) continue;
    const PairMask mask = build_mask(im.relations, im.persons.size(), mode);
    ForwardContext<float> ctx;
    ctx.quant = quant;
    const auto out = model.forward(ctx, im.image, im.persons);
    const std::size_t p = out.scores.dim(0);
    const auto s = out.scores.data();
    for (std::size_t i = 0; i < mask.persons; ++i)
      for (std::size_t j = 0; j < mask.persons; ++j) {
        if (!mask.at(i, j)) continue;
        EvalRecord r;
        r.scores.assign(s.begin() + static_cast<std::ptrdiff_t>((i * p + j) * classes),
                        s.begin() + static_cast<std::ptrdiff_t>((i * p + j + 1) * classes));
        r.truth = static_cast<std::size_t>(mask.target[i * mask.persons + j]);
        r.image_id = im.id;
        r.i = i;
        r.j = j;
        result.records.push_back(std::move(r));
      }
  }
  if (result.records.empty()) throw DataError("evaluation split has no labelled pairs");
  result.report = summarize(result.records, classes);
  return result;
}

}  // namespace rgnet
