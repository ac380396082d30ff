// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rgnet/cli.hpp"
#include "rgnet/config.hpp"
#include "rgnet/dataset.hpp"
#include "rgnet/error.hpp"
#include "rgnet/loss.hpp"
#include "rgnet/metrics.hpp"
#include "rgnet/model.hpp"
#include "rgnet/qat.hpp"
#include "rgnet/quant.hpp"
#include "rgnet/trainer.hpp"

namespace py = pybind11;
using namespace rgnet;

namespace {

using FloatArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  auto data = t.data();
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

Tensor<float> from_numpy(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<float> values(a.data(), a.data() + a.size());
  return Tensor<float>(std::move(shape), std::move(values));
}

std::vector<PersonBox> to_boxes(const std::vector<std::array<double, 4>>& boxes) {
  std::vector<PersonBox> out;
  for (const auto& b : boxes) out.push_back(PersonBox::clamped(b[0], b[1], b[2], b[3]));
  return out;
}

std::vector<EvalRecord> to_records(const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& truth) {
  if (scores.size() != truth.size()) throw DataError("score rows and truth labels differ in length");
  std::vector<EvalRecord> out(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    out[k].scores = scores[k];
    out[k].truth = truth[k];
  }
  return out;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["mAP"] = r.map.map;
  d["ap"] = r.map.ap;
  d["recall"] = r.recall;
  d["accuracy"] = r.accuracy;
  d["pairs"] = r.pairs;
  return d;
}

MaskMode mask_mode(bool bilateral) { return bilateral ? MaskMode::kBilateral : MaskMode::kUnilateral; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Group relation network: models, metrics and INT8 quantization";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("class_weights", [](const std::vector<std::size_t>& counts) { return compute_class_weights(counts).weights; },
        py::arg("counts"));

  m.def("average_precision", &average_precision, py::arg("scores"), py::arg("positive"));
  m.def(
      "mean_average_precision",
      [](const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& truth, std::size_t classes) {
        const auto r = mean_average_precision(to_records(scores, truth), classes);
        return py::make_tuple(r.map, r.ap);
      },
      py::arg("scores"), py::arg("truth"), py::arg("classes"));
  m.def(
      "per_class_recall",
      [](const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& truth, std::size_t classes) {
        return per_class_recall(to_records(scores, truth), classes);
      },
      py::arg("scores"), py::arg("truth"), py::arg("classes"));

  py::class_<QuantScheme>(m, "QuantScheme")
      .def(py::init([](double scale, std::int32_t zero_point) {
             QuantScheme s;
             s.scale = scale;
             s.zero_point = zero_point;
             return s;
           }),
           py::arg("scale"), py::arg("zero_point") = 0)
      .def_readwrite("scale", &QuantScheme::scale)
      .def_readwrite("zero_point", &QuantScheme::zero_point)
      .def_property_readonly("range", [](const QuantScheme& s) { return py::make_tuple(s.range_min(), s.range_max()); })
      .def("__repr__", [](const QuantScheme& s) {
        std::ostringstream os;
        os << "QuantScheme(scale=" << s.scale << ", zero_point=" << s.zero_point << ")";
        return os.str();
      });
  m.def("weight_scheme", [](const FloatArray& a) { return weight_scheme<double>({a.data(), static_cast<std::size_t>(a.size())}); });
  m.def("activation_scheme", &activation_scheme, py::arg("min"), py::arg("max"));
  m.def("quantize", [](const FloatArray& a, const QuantScheme& s) {
    const auto q = quantize<double>({a.data(), static_cast<std::size_t>(a.size())}, s);
    py::array_t<std::int8_t> out(static_cast<py::ssize_t>(q.size()));
    std::copy(q.begin(), q.end(), out.mutable_data());
    return out;
  });
  m.def("dequantize", [](const py::array_t<std::int8_t, py::array::c_style | py::array::forcecast>& a, const QuantScheme& s) {
    const auto v = dequantize<double>({a.data(), static_cast<std::size_t>(a.size())}, s);
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
  });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("classes", &Dataset::classes)
      .def("__len__", [](const Dataset& d) { return d.images.size(); })
      .def_property_readonly("max_persons", &Dataset::max_persons)
      .def_property_readonly("pair_count", &Dataset::pair_count)
      .def("image", [](const Dataset& d, std::size_t k) { return to_numpy(d.images.at(k).image); })
      .def("boxes",
           [](const Dataset& d, std::size_t k) {
             std::vector<std::array<double, 4>> out;
             for (const auto& b : d.images.at(k).persons) out.push_back({b.x1, b.y1, b.x2, b.y2});
             return out;
           })
      .def("relations",
           [](const Dataset& d, std::size_t k) {
             std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> out;
             for (const auto& r : d.images.at(k).relations) out.emplace_back(r.i, r.j, r.cls);
             return out;
           })
      .def("to_json", &to_annotation_json)
      .def("save", [](const Dataset& d, const std::filesystem::path& p) { save_annotations(d, p); })
      .def("split", [](const Dataset& d, std::size_t test) { return split_tail(d, test); }, py::arg("test"))
      .def("class_counts", [](const Dataset& d) { return compute_stats(d).class_counts; })
      .def("stats", [](const Dataset& d) { return format_stats_key_values(compute_stats(d)); });

  m.def(
      "generate_synthetic",
      [](std::size_t images, std::size_t classes, std::uint64_t seed, std::size_t image_size, std::size_t min_persons,
         std::size_t max_persons, std::vector<double> profile) {
        SyntheticConfig c;
        c.images = images;
        c.classes = classes;
        c.seed = seed;
        c.image_size = image_size;
        c.min_persons = min_persons;
        c.max_persons = max_persons;
        c.profile = std::move(profile);
        return generate_synthetic(c);
      },
      py::arg("images") = 16, py::arg("classes") = 6, py::arg("seed") = 0, py::arg("image_size") = 32,
      py::arg("min_persons") = 2, py::arg("max_persons") = 4, py::arg("profile") = std::vector<double>{});
  m.def(
      "load_annotations",
      [](const std::filesystem::path& path, std::size_t classes, std::size_t image_size) {
        return load_annotations(path, LoadOptions{classes, image_size});
      },
      py::arg("path"), py::arg("classes") = 6, py::arg("image_size") = 32);

  py::class_<ModelConfig>(m, "Config")
      .def(py::init<>())
      .def_static("parse", [](const std::string& text) { return parse_config(text); })
      .def_static("load", &load_config)
      .def("text", &to_config_text)
      .def("validate", &ModelConfig::validate)
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; })
      .def("toggle_bits",
           [](const ModelConfig& c) {
             const auto& t = c.toggles;
             return int(t.wbce) | int(t.bilateral) << 1 | int(t.logit_transform) << 2 | int(t.edge_query) << 3 |
                    int(t.se_block) << 4;
           })
      .def("__repr__", &to_config_text);

  py::class_<TrainState>(m, "Trainer")
      .def(py::init<const ModelConfig&>(), py::arg("config"))
      .def_static("load", &TrainState::load)
      .def("save", &TrainState::save)
      .def_readonly("epoch", &TrainState::epoch)
      .def_property_readonly("parameter_count", [](const TrainState& s) { return s.model.store().scalar_count(); })
      .def(
          "train",
          [](TrainState& s, const Dataset& data, std::size_t epochs) {
            TrainOptions opt;
            opt.epochs = epochs;
            py::list out;
            for (const auto& log : train(s, data, opt)) {
              py::dict d;
              d["epoch"] = log.epoch;
              d["loss"] = log.loss;
              d["mAP"] = log.map;
              d["accuracy"] = log.accuracy;
              out.append(d);
            }
            return out;
          },
          py::arg("data"), py::arg("epochs"))
      .def(
          "evaluate",
          [](const TrainState& s, const Dataset& data, bool bilateral) {
            return report_dict(evaluate(s.model, data, mask_mode(bilateral)).report);
          },
          py::arg("data"), py::arg("bilateral") = false)
      .def(
          "forward",
          [](const TrainState& s, const FloatArray& image, const std::vector<std::array<double, 4>>& boxes) {
            const ForwardContext<float> ctx;
            const auto boxes_ = to_boxes(boxes);
            return to_numpy(s.model.forward(ctx, from_numpy(image), boxes_).scores);
          },
          py::arg("image"), py::arg("boxes"))
      .def(
          "quantize",
          [](TrainState& s, const Dataset& train_set, const Dataset& test_set, std::size_t qat_epochs) {
            QuantizeOptions opt;
            opt.qat_epochs = qat_epochs;
            const auto r = quantize_model(s, train_set, test_set, opt);
            py::dict d;
            d["fp32"] = report_dict(r.fp32);
            d["int8"] = report_dict(r.int8);
            d["payload_ratio"] = r.size.payload_ratio();
            d["file_ratio"] = r.size.file_ratio();
            d["parameters"] = r.size.parameters;
            return d;
          },
          py::arg("train"), py::arg("test"), py::arg("qat_epochs") = 3);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"rgnet"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
