// SPDX-License-Identifier: Apache-2.0
#include "rgnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "rgnet/error.hpp"

namespace rgnet {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
  }
  return out;
}

struct Field {
  std::function<void(ModelConfig&, const std::string&)> set;
  std::function<std::string(const ModelConfig&)> get;
};

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto flag = [&](const char* key, bool Toggles::*member) {
      t.push_back({key,
                   {[=](ModelConfig& c, const std::string& v) { c.toggles.*member = parse_bool(key, v); },
                    [=](const ModelConfig& c) { return std::string(c.toggles.*member ? "true" : "false"); }}});
    };
    auto dim = [&](const char* key, std::size_t Dims::*member) {
      t.push_back({key,
                   {[=](ModelConfig& c, const std::string& v) { c.dims.*member = parse_uint(key, v); },
                    [=](const ModelConfig& c) { return std::to_string(c.dims.*member); }}});
    };
    auto real = [&](const char* key, double TrainConfig::*member) {
      t.push_back({key,
                   {[=](ModelConfig& c, const std::string& v) { c.train.*member = parse_double(key, v); },
                    [=](const ModelConfig& c) { return format_double(c.train.*member); }}});
    };
    flag("toggles.wbce", &Toggles::wbce);
    flag("toggles.bilateral", &Toggles::bilateral);
    flag("toggles.logit_transform", &Toggles::logit_transform);
    flag("toggles.edge_query", &Toggles::edge_query);
    flag("toggles.se_block", &Toggles::se_block);
    dim("dims.image_size", &Dims::image_size);
    dim("dims.stem_width", &Dims::stem_width);
    dim("dims.feature_channels", &Dims::feature_channels);
    dim("dims.hidden", &Dims::hidden);
    dim("dims.model_width", &Dims::model_width);
    dim("dims.heads", &Dims::heads);
    dim("dims.ffn_width", &Dims::ffn_width);
    dim("dims.roi_grid", &Dims::roi_grid);
    dim("dims.max_persons", &Dims::max_persons);
    dim("dims.classes", &Dims::classes);
    dim("dims.gqm_iterations", &Dims::gqm_iterations);
    dim("dims.se_reduction", &Dims::se_reduction);
    real("train.lr_backbone", &TrainConfig::lr_backbone);
    real("train.lr_rest", &TrainConfig::lr_rest);
    real("train.beta1", &TrainConfig::beta1);
    real("train.beta2", &TrainConfig::beta2);
    real("train.adam_eps", &TrainConfig::adam_eps);
    real("train.dropout", &TrainConfig::dropout);
    t.push_back({"train.optimizer",
                 {[](ModelConfig& c, const std::string& v) {
                    if (v == "adam") c.train.optimizer = OptimizerKind::kAdam;
                    else if (v == "sgd") c.train.optimizer = OptimizerKind::kSgd;
                    else throw ConfigError("config key 'train.optimizer': expected adam|sgd, got '" + v + "'");
                  },
                  [](const ModelConfig& c) {
                    return std::string(c.train.optimizer == OptimizerKind::kAdam ? "adam" : "sgd");
                  }}});
    t.push_back({"train.loss_form",
                 {[](ModelConfig& c, const std::string& v) {
                    if (v == "wbce") c.train.loss_form = LossForm::kWeightedBce;
                    else if (v == "literal") c.train.loss_form = LossForm::kLiteral;
                    else throw ConfigError("config key 'train.loss_form': expected wbce|literal, got '" + v + "'");
                  },
                  [](const ModelConfig& c) {
                    return std::string(c.train.loss_form == LossForm::kWeightedBce ? "wbce" : "literal");
                  }}});
    t.push_back({"train.batch_size",
                 {[](ModelConfig& c, const std::string& v) { c.train.batch_size = parse_uint("train.batch_size", v); },
                  [](const ModelConfig& c) { return std::to_string(c.train.batch_size); }}});
    t.push_back({"train.epochs",
                 {[](ModelConfig& c, const std::string& v) { c.train.epochs = parse_uint("train.epochs", v); },
                  [](const ModelConfig& c) { return std::to_string(c.train.epochs); }}});
    t.push_back({"train.seed",
                 {[](ModelConfig& c, const std::string& v) { c.train.seed = parse_uint("train.seed", v); },
                  [](const ModelConfig& c) { return std::to_string(c.train.seed); }}});
    return t;
  }();
  return table;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (dims.classes < 2) fail("dims.classes must be >= 2");
  if (dims.max_persons < 2) fail("dims.max_persons must be >= 2");
  if (dims.image_size == 0 || dims.image_size % kStemStride != 0) {
    fail("dims.image_size must be a positive multiple of the stem stride " + std::to_string(kStemStride));
  }
  if (dims.heads == 0 || dims.model_width % dims.heads != 0) fail("dims.model_width must be divisible by dims.heads");
  if (dims.model_width % 4 != 0) fail("dims.model_width must be divisible by 4 (2-D positional encoding)");
  if (dims.se_reduction == 0 || dims.feature_channels % dims.se_reduction != 0) {
    fail("dims.feature_channels must be divisible by dims.se_reduction");
  }
  if (dims.hidden == 0 || dims.ffn_width == 0 || dims.roi_grid == 0 || dims.stem_width == 0) {
    fail("dimensions must be positive");
  }
  if (dims.gqm_iterations == 0) fail("dims.gqm_iterations must be >= 1");
  if (train.batch_size == 0) fail("train.batch_size must be >= 1");
  if (!(train.dropout >= 0.0 && train.dropout < 1.0)) fail("train.dropout must lie in [0, 1)");
  if (!(train.lr_backbone >= 0.0) || !(train.lr_rest >= 0.0)) fail("learning rates must be non-negative");
}

ModelConfig parse_config(const std::string& text, ModelConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool matched = false;
    for (const auto& [name, field] : fields()) {
      if (name == key) {
        field.set(base, value);
        matched = true;
        break;
      }
    }
    if (!matched) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  base.validate();
  return base;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_config_text(const ModelConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(config) + "\n";
  return out;
}

}  // namespace rgnet
