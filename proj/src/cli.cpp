// SPDX-License-Identifier: Apache-2.0
#include "rgnet/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "rgnet/error.hpp"
#include "rgnet/gradcheck.hpp"
#include "rgnet/qat.hpp"

namespace rgnet {

namespace fs = std::filesystem;

namespace {

struct Shared {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

struct Options {
  Shared shared;
  // gen-data
  std::size_t images = 500;
  std::size_t min_persons = 2;
  std::size_t max_persons = 0;
  std::string profile;
  bool ppm = false;
  // data / checkpoints
  std::string data;
  std::string eval_data;
  std::size_t test = 0;
  std::string checkpoint;
  std::string resume;
  std::optional<std::size_t> epochs;
  std::string mask = "unilateral";
  std::size_t qat_epochs = 3;
  double qat_lr_scale = 0.1;
  std::size_t seeds = 5;
};

ModelConfig resolve_config(const Shared& s) {
  ModelConfig c = s.config_path.empty() ? ModelConfig{} : load_config(s.config_path);
  if (s.seed) c.train.seed = *s.seed;
  c.validate();
  return c;
}

fs::path out_dir(const Shared& s) {
  fs::path dir(s.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

void write_report(const fs::path& dir, const std::string& stem, const std::string& table, const std::string& kv) {
  write_text(dir / (stem + ".txt"), table);
  write_text(dir / (stem + ".kv"), kv);
}

Dataset load_data(const std::string& path, const ModelConfig& c) {
  if (path.empty()) throw ConfigError("--data is required");
  return load_annotations(path, LoadOptions{c.dims.classes, c.dims.image_size});
}

std::vector<double> parse_profile(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--profile: cannot parse '" + item + "'");
    }
  }
  return out;
}

MaskMode parse_mask(const std::string& s) {
  if (s == "unilateral") return MaskMode::kUnilateral;
  if (s == "bilateral") return MaskMode::kBilateral;
  throw ConfigError("--mask must be 'unilateral' or 'bilateral'");
}

/// Evaluation split: --eval-data when given, else the last --test images, else
/// the training data itself.
std::pair<Dataset, Dataset> splits(const Options& o, const ModelConfig& c) {
  Dataset data = load_data(o.data, c);
  if (!o.eval_data.empty()) return {std::move(data), load_data(o.eval_data, c)};
  if (o.test > 0) return split_tail(data, o.test);
  Dataset eval = data;
  return {std::move(data), std::move(eval)};
}

bool is_quantized(const Checkpoint& ckpt) {
  for (const auto& r : ckpt.records())
    if (r.dtype == DType::kInt8) return true;
  return false;
}

Checkpoint load_checkpoint(const std::string& path) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  return Checkpoint::load(path);
}

std::string toggle_string(const Toggles& t) {
  std::string s;
  s += t.wbce ? "W" : "-";
  s += t.bilateral ? "B" : "-";
  s += t.logit_transform ? "L" : "-";
  s += t.edge_query ? "G" : "-";
  s += t.se_block ? "S" : "-";
  return s;
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  const ModelConfig c = resolve_config(o.shared);
  SyntheticConfig sc;
  sc.images = o.images;
  sc.classes = c.dims.classes;
  sc.min_persons = o.min_persons;
  sc.max_persons = o.max_persons ? o.max_persons : c.dims.max_persons;
  sc.image_size = c.dims.image_size;
  sc.profile = o.profile.empty() ? std::vector<double>{} : parse_profile(o.profile);
  sc.seed = c.train.seed;
  Dataset ds = generate_synthetic(sc);
  const fs::path dir = out_dir(o.shared);
  if (o.ppm) {
    fs::create_directories(dir / "images");
    for (auto& im : ds.images) {
      write_ppm(dir / "images" / (im.id + ".ppm"), im.image);
      im.source = "images/" + im.id + ".ppm";
    }
  }
  save_annotations(ds, dir / "annotations.json");
  out << "wrote " << ds.images.size() << " images, " << ds.pair_count() << " labelled pairs to "
      << (dir / "annotations.json").string() << "\n";
  return kExitOk;
}

int cmd_stats(const Options& o, std::ostream& out) {
  const ModelConfig c = resolve_config(o.shared);
  const DatasetStats s = compute_stats(load_data(o.data, c));
  const std::string table = format_stats_table(s);
  write_report(out_dir(o.shared), "stats", table, format_stats_key_values(s));
  out << table;
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const fs::path dir = out_dir(o.shared);
  std::optional<TrainState> state;
  if (!o.resume.empty()) {
    state.emplace(TrainState::load(o.resume));
  } else {
    state.emplace(resolve_config(o.shared));
  }
  const ModelConfig& c = state->config();
  const std::size_t target = o.epochs.value_or(c.train.epochs);
  auto [train_set, eval_set] = splits(o, c);

  std::ofstream log(dir / "train_log.jsonl", o.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write " + (dir / "train_log.jsonl").string());
  TrainOptions topts;
  topts.epochs = target > state->epoch ? target - state->epoch : 0;
  topts.eval = &eval_set;
  topts.on_epoch = [&](const EpochLog& e) {
    log << to_json_line(e) << "\n";
    log.flush();
    state->save(dir / "state.rgn");
    char line[128];
    std::snprintf(line, sizeof line, "epoch %zu  loss %.4f  mAP %.2f  accuracy %.4f\n", e.epoch, e.loss, e.map,
                  e.accuracy);
    out << line;
  };
  train(*state, train_set, topts);
  state->save(dir / "state.rgn");
  model_checkpoint(state->model).save(dir / "model.rgn");
  out << "saved " << (dir / "model.rgn").string() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const ModelConfig c = config_from_checkpoint(ckpt);
  const Dataset data = load_data(o.data, c);
  const MaskMode mode = parse_mask(o.mask);
  const EvalResult r = is_quantized(ckpt) ? evaluate_quantized(QuantizedModel::from_checkpoint(ckpt), data, mode)
                                          : evaluate(model_from_checkpoint(ckpt), data, mode);
  const std::string table = format_table(r.report);
  write_report(out_dir(o.shared), "eval", table, format_key_values(r.report));
  out << table;
  for (std::size_t cls : r.report.map.skipped) out << "warning: class " << cls << " has no positive pairs\n";
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const ModelConfig base = resolve_config(o.shared);
  auto [train_set, eval_set] = splits(o, base);
  const char* names[] = {"WBCE", "+Bilateral", "+Logit", "+GQM", "+SE"};
  std::string table = "row          toggles      mAP   accuracy\n";
  std::string kv;
  Toggles t{false, false, false, false, false};
  for (int row = 0; row < 5; ++row) {
    switch (row) {
      case 0: t.wbce = true; break;
      case 1: t.bilateral = true; break;
      case 2: t.logit_transform = true; break;
      case 3: t.edge_query = true; break;
      default: t.se_block = true; break;
    }
    ModelConfig c = base;
    c.toggles = t;
    if (o.epochs) c.train.epochs = *o.epochs;
    TrainState state(c);
    TrainOptions topts;
    topts.epochs = c.train.epochs;
    topts.evaluate_each_epoch = false;
    train(state, train_set, topts);
    const auto report = evaluate(state.model, eval_set, MaskMode::kUnilateral).report;
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %-8s %8.2f %10.4f\n", names[row], toggle_string(t).c_str(),
                  report.map.map, report.accuracy);
    table += line;
    std::snprintf(line, sizeof line, "row%d.name = %s\nrow%d.toggles = %s\nrow%d.mAP = %.6f\nrow%d.accuracy = %.6f\n",
                  row + 1, names[row], row + 1, toggle_string(t).c_str(), row + 1, report.map.map, row + 1,
                  report.accuracy);
    kv += line;
    out << line;
  }
  write_report(out_dir(o.shared), "ablation", table, kv);
  out << "\n" << table;
  return kExitOk;
}

TrainState state_from(const Checkpoint& ckpt) {
  if (ckpt.contains("state.epoch")) return TrainState::from_checkpoint(ckpt);
  TrainState s(config_from_checkpoint(ckpt));
  s.model = model_from_checkpoint(ckpt);
  return s;
}

int cmd_quantize(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (is_quantized(ckpt)) throw ConfigError("--checkpoint is already quantized");
  TrainState state = state_from(ckpt);
  if (o.eval_data.empty() && o.test == 0) throw ConfigError("quantize needs --eval-data or --test");
  auto [train_set, test_set] = splits(o, state.config());
  QuantizeOptions qo;
  qo.qat_epochs = o.qat_epochs;
  qo.qat_lr_scale = o.qat_lr_scale;
  qo.eval_mode = parse_mask(o.mask);
  const QuantizeReport r = quantize_model(state, train_set, test_set, qo);
  const fs::path dir = out_dir(o.shared);
  r.qmodel.save(dir / "model_int8.rgn");
  model_checkpoint(state.model).save(dir / "model_qat_fp32.rgn");
  const std::string table = format_quantize_table(r);
  write_report(dir, "quantize", table, format_quantize_key_values(r));
  out << table;
  return kExitOk;
}

int cmd_export(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  if (is_quantized(ckpt)) throw ConfigError("--checkpoint is already quantized");
  const Model<float> model = model_from_checkpoint(ckpt);
  QuantState quant;
  calibrate(model, load_data(o.data, model.config()), quant);
  const QuantizedModel q = export_quantized(model, quant);
  const fs::path dir = out_dir(o.shared);
  q.save(dir / "model_int8.rgn");
  const SizeReport s = size_report(model, q);
  char text[320];
  std::snprintf(text, sizeof text,
                "parameters %zu\nfp32 payload %zu bytes, file %zu bytes\nint8 payload %zu bytes, file %zu bytes\n"
                "payload ratio %.4f, file ratio %.4f\n",
                s.parameters, s.fp32_payload_bytes, s.fp32_file_bytes, s.int8_payload_bytes, s.int8_file_bytes,
                s.payload_ratio(), s.file_ratio());
  char kv[320];
  std::snprintf(kv, sizeof kv,
                "parameters = %zu\nfp32.payload_bytes = %zu\nfp32.file_bytes = %zu\nint8.payload_bytes = %zu\n"
                "int8.file_bytes = %zu\npayload_ratio = %.6f\nfile_ratio = %.6f\n",
                s.parameters, s.fp32_payload_bytes, s.fp32_file_bytes, s.int8_payload_bytes, s.int8_file_bytes,
                s.payload_ratio(), s.file_ratio());
  write_report(dir, "export", text, kv);
  out << text;
  return kExitOk;
}

int cmd_grad_check(const Options& o, std::ostream& out) {
  const std::uint64_t base = o.shared.seed.value_or(0);
  std::string table = "seed  check                  rel.error   coords  status\n";
  std::string kv;
  bool ok = true;
  for (std::size_t k = 0; k < o.seeds; ++k) {
    for (const auto& r : run_gradient_suite(base + k)) {
      char line[160];
      std::snprintf(line, sizeof line, "%4zu  %-20s %11.3e %8zu  %s\n", static_cast<std::size_t>(base + k),
                    r.name.c_str(), r.relative_error, r.coordinates, r.passed() ? "ok" : "FAIL");
      table += line;
      std::snprintf(line, sizeof line, "seed%zu.%s = %.6e\n", static_cast<std::size_t>(base + k), r.name.c_str(),
                    r.relative_error);
      kv += line;
      ok = ok && r.passed();
    }
  }
  kv += std::string("passed = ") + (ok ? "true" : "false") + "\n";
  write_report(out_dir(o.shared), "gradcheck", table, kv);
  out << table;
  if (!ok) throw NumericError("gradient check failed; see gradcheck.txt");
  return kExitOk;
}

const char* kind_name(Error::Kind k) {
  switch (k) {
    case Error::Kind::kShape: return "shape";
    case Error::Kind::kConfig: return "config";
    case Error::Kind::kData: return "data";
    case Error::Kind::kNumeric: return "numeric";
    case Error::Kind::kIo: return "io";
  }
  return "error";
}

int exit_code(Error::Kind k) {
  switch (k) {
    case Error::Kind::kConfig: return kExitConfig;
    case Error::Kind::kNumeric: return kExitNumeric;
    default: return kExitData;
  }
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Pairwise relation recognition: data generation, training, evaluation and INT8 export", "rgnet"};
  app.require_subcommand(1);
  auto shared = [&](CLI::App* sub) {
    sub->add_option("--config", o.shared.config_path, "Key-value model configuration");
    sub->add_option("--seed", o.shared.seed, "Seed overriding train.seed");
    sub->add_option("--out", o.shared.out_dir, "Output directory")->capture_default_str();
  };
  auto data_opts = [&](CLI::App* sub, bool eval_split) {
    sub->add_option("--data", o.data, "Annotation file")->required();
    if (eval_split) {
      sub->add_option("--eval-data", o.eval_data, "Separate evaluation annotation file");
      sub->add_option("--test", o.test, "Hold out the last N images for evaluation");
    }
  };

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  shared(gen);
  gen->add_option("--images", o.images, "Number of images")->capture_default_str();
  gen->add_option("--min-persons", o.min_persons, "Fewest persons per image")->capture_default_str();
  gen->add_option("--max-persons", o.max_persons, "Most persons per image (default: dims.max_persons)");
  gen->add_option("--profile", o.profile, "Comma-separated class marginals");
  gen->add_flag("--ppm", o.ppm, "Write images as PPM files and reference them");

  auto* stats = app.add_subcommand("stats", "Class counts, weights and per-image label histograms");
  shared(stats);
  data_opts(stats, false);

  auto* tr = app.add_subcommand("train", "Train a model");
  shared(tr);
  data_opts(tr, true);
  tr->add_option("--epochs", o.epochs, "Total epochs (default: train.epochs)");
  tr->add_option("--resume", o.resume, "Continue from a state checkpoint");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  shared(ev);
  data_opts(ev, false);
  ev->add_option("--checkpoint", o.checkpoint, "FP32 or INT8 model checkpoint")->required();
  ev->add_option("--mask", o.mask, "unilateral or bilateral")->capture_default_str();

  auto* ab = app.add_subcommand("ablate", "Cumulative toggle ablation");
  shared(ab);
  data_opts(ab, true);
  ab->add_option("--epochs", o.epochs, "Epochs per row (default: train.epochs)");

  auto* qz = app.add_subcommand("quantize", "Calibrate, fine-tune with fake quantization and export INT8");
  shared(qz);
  data_opts(qz, true);
  qz->add_option("--checkpoint", o.checkpoint, "Trained FP32 checkpoint")->required();
  qz->add_option("--qat-epochs", o.qat_epochs, "Fake-quantized fine-tuning epochs")->capture_default_str();
  qz->add_option("--qat-lr-scale", o.qat_lr_scale, "Learning-rate multiplier while fine-tuning")->capture_default_str();
  qz->add_option("--mask", o.mask, "unilateral or bilateral")->capture_default_str();

  auto* ex = app.add_subcommand("export", "Post-training INT8 export with size report");
  shared(ex);
  data_opts(ex, false);
  ex->add_option("--checkpoint", o.checkpoint, "FP32 checkpoint")->required();

  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient suite");
  shared(gc);
  gc->add_option("--seeds", o.seeds, "Number of seeds")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (stats->parsed()) return cmd_stats(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (ab->parsed()) return cmd_ablate(o, out);
    if (qz->parsed()) return cmd_quantize(o, out);
    if (ex->parsed()) return cmd_export(o, out);
    if (gc->parsed()) return cmd_grad_check(o, out);
  } catch (const Error& e) {
    err << "error: " << kind_name(e.kind()) << ": " << one_line(e.what()) << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << one_line(e.what()) << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace rgnet
