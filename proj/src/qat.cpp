// SPDX-License-Identifier: Apache-2.0
#include "rgnet/qat.hpp"

#include <cstdio>
#include <sstream>

#include "rgnet/error.hpp"

namespace rgnet {

namespace {

constexpr const char kActivationPrefix[] = "act.";

}  // namespace

void calibrate(const Model<float>& model, const Dataset& data, QuantState& quant) {
  quant.mode = QuantMode::kCalibrate;
  ForwardContext<float> ctx;
  ctx.quant = &quant;
  std::size_t seen = 0;
  for (const auto& im : data.images) {
    if (im.persons.size() < 2) continue;
    model.forward(ctx, im.image, im.persons);
    ++seen;
  }
  if (seen == 0) throw DataError("calibration split has no usable image");
}

QuantizedModel export_quantized(const Model<float>& model, const QuantState& quant) {
  QuantizedModel q;
  q.config = model.config();
  for (const auto& p : model.store().params()) {
    QuantizedTensor t;
    t.name = p.name;
    t.shape = p.value.shape();
    t.scheme = weight_scheme<float>(p.value.data());
    t.levels = quantize<float>(p.value.data(), t.scheme);
    q.params.push_back(std::move(t));
  }
  const auto schemes = quant.activation_schemes();
  for (const char* site : kActivationSites) {
    auto it = schemes.find(site);
    if (it == schemes.end()) throw ConfigError(std::string("activation site '") + site + "' is not calibrated");
    q.activations[site] = it->second;
  }
  return q;
}

Checkpoint QuantizedModel::to_checkpoint() const {
  Checkpoint c;
  c.add_text("config", to_config_text(config));
  for (const auto& t : params) c.add_int8(t.name, t.shape, t.levels, {t.scheme.scale, t.scheme.zero_point});
  for (const auto& [site, s] : activations) c.add_int8(kActivationPrefix + site, Shape{0}, {}, {s.scale, s.zero_point});
  return c;
}

QuantizedModel QuantizedModel::from_checkpoint(const Checkpoint& ckpt) {
  QuantizedModel q;
  q.config = config_from_checkpoint(ckpt);
  for (const Record& r : ckpt.records()) {
    if (r.dtype != DType::kInt8) continue;
    QuantScheme s;
    s.scale = r.quant->scale;
    s.zero_point = r.quant->zero_point;
    if (r.name.rfind(kActivationPrefix, 0) == 0) {
      q.activations[r.name.substr(sizeof(kActivationPrefix) - 1)] = s;
      continue;
    }
    q.params.push_back({r.name, r.shape, ckpt.int8s(r.name), s});
  }
  return q;
}

void QuantizedModel::save(const std::filesystem::path& path) const { to_checkpoint().save(path); }

QuantizedModel QuantizedModel::load(const std::filesystem::path& path) {
  return from_checkpoint(Checkpoint::load(path));
}

Model<float> QuantizedModel::dequantized_model() const {
  Model<float> model(config, config.train.seed);
  std::vector<std::pair<std::string, std::vector<double>>> values;
  for (const auto& t : params) {
    const auto dq = dequantize<double>(t.levels, t.scheme);
    values.emplace_back(t.name, dq);
  }
  model.load_values(values);
  return model;
}

QuantState QuantizedModel::simulated_state() const {
  QuantState s;
  s.mode = QuantMode::kSimulated;
  s.frozen = activations;
  return s;
}

EvalResult evaluate_quantized(const QuantizedModel& qmodel, const Dataset& data, MaskMode mode) {
  const Model<float> model = qmodel.dequantized_model();
  QuantState state = qmodel.simulated_state();
  return evaluate(model, data, mode, &state);
}

double SizeReport::payload_ratio() const {
  return static_cast<double>(int8_payload_bytes) / static_cast<double>(fp32_payload_bytes);
}

double SizeReport::file_ratio() const {
  return static_cast<double>(int8_file_bytes) / static_cast<double>(fp32_file_bytes);
}

SizeReport size_report(const Model<float>& model, const QuantizedModel& qmodel) {
  SizeReport r;
  r.parameters = model.store().scalar_count();
  const Checkpoint fp32 = model_checkpoint(model);
  const Checkpoint int8 = qmodel.to_checkpoint();
  for (const auto& p : model.store().params()) r.fp32_payload_bytes += fp32.at(p.name).payload.size();
  for (const auto& t : qmodel.params) r.int8_payload_bytes += int8.at(t.name).payload.size();
  r.fp32_file_bytes = fp32.serialize().size();
  r.int8_file_bytes = int8.serialize().size();
  return r;
}

QuantizeReport quantize_model(TrainState& state, const Dataset& train_set, const Dataset& test,
                              const QuantizeOptions& options) {
  QuantizeReport report;
  report.fp32 = evaluate(state.model, test, options.eval_mode).report;

  QuantState quant;
  calibrate(state.model, train_set, quant);
  if (options.qat_epochs > 0) {
    quant.mode = QuantMode::kQat;
    TrainOptions topts;
    topts.epochs = options.qat_epochs;
    topts.quant = &quant;
    topts.lr_scale = options.qat_lr_scale;
    topts.evaluate_each_epoch = false;
    train(state, train_set, topts);
  }
  report.qmodel = export_quantized(state.model, quant);
  report.int8 = evaluate_quantized(report.qmodel, test, options.eval_mode).report;
  report.size = size_report(state.model, report.qmodel);
  return report;
}

namespace {

std::string num(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string format_quantize_table(const QuantizeReport& r) {
  std::ostringstream out;
  char line[160];
  out << "precision        mAP   accuracy   payload bytes   file bytes\n";
  std::snprintf(line, sizeof line, "FP32      %10.2f %10.4f %15zu %12zu\n", r.fp32.map.map, r.fp32.accuracy,
                r.size.fp32_payload_bytes, r.size.fp32_file_bytes);
  out << line;
  std::snprintf(line, sizeof line, "INT8      %10.2f %10.4f %15zu %12zu\n", r.int8.map.map, r.int8.accuracy,
                r.size.int8_payload_bytes, r.size.int8_file_bytes);
  out << line;
  std::snprintf(line, sizeof line, "\nmAP drop %.2f points; payload ratio %.4f; file ratio %.4f; %zu parameters\n",
                r.fp32.map.map - r.int8.map.map, r.size.payload_ratio(), r.size.file_ratio(), r.size.parameters);
  out << line;
  return out.str();
}

std::string format_quantize_key_values(const QuantizeReport& r) {
  std::ostringstream out;
  out << "fp32.mAP = " << num(r.fp32.map.map, 6) << "\n";
  out << "int8.mAP = " << num(r.int8.map.map, 6) << "\n";
  out << "fp32.accuracy = " << num(r.fp32.accuracy, 6) << "\n";
  out << "int8.accuracy = " << num(r.int8.accuracy, 6) << "\n";
  for (std::size_t c = 0; c < r.fp32.recall.size(); ++c) {
    out << "fp32.recall." << c << " = " << (r.fp32.recall[c] ? num(*r.fp32.recall[c], 6) : "nan") << "\n";
    out << "int8.recall." << c << " = " << (r.int8.recall[c] ? num(*r.int8.recall[c], 6) : "nan") << "\n";
  }
  out << "parameters = " << r.size.parameters << "\n";
  out << "fp32.payload_bytes = " << r.size.fp32_payload_bytes << "\n";
  out << "int8.payload_bytes = " << r.size.int8_payload_bytes << "\n";
  out << "fp32.file_bytes = " << r.size.fp32_file_bytes << "\n";
  out << "int8.file_bytes = " << r.size.int8_file_bytes << "\n";
  out << "payload_ratio = " << num(r.size.payload_ratio(), 6) << "\n";
  out << "file_ratio = " << num(r.size.file_ratio(), 6) << "\n";
  return out.str();
}

}  // namespace rgnet
