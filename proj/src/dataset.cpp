// SPDX-License-Identifier: Apache-2.0
#include "rgnet/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rgnet/error.hpp"
#include "rgnet/rng.hpp"

namespace rgnet {

namespace {

using Json = nlohmann::ordered_json;

constexpr std::array<std::array<float, 3>, 8> kBasePalette{{
    {1.0f, 0.0f, 0.0f},
    {0.0f, 0.8f, 0.0f},
    {0.0f, 0.0f, 1.0f},
    {1.0f, 1.0f, 0.0f},
    {1.0f, 0.0f, 1.0f},
    {0.0f, 1.0f, 1.0f},
    {1.0f, 0.5f, 0.0f},
    {1.0f, 1.0f, 1.0f},
}};

std::array<float, 3> palette_colour(std::size_t k) {
  if (k < kBasePalette.size()) return kBasePalette[k];
  // Golden-ratio hue walk for larger class counts.
  const double h = std::fmod(static_cast<double>(k - kBasePalette.size()) * 0.6180339887498949 + 0.05, 1.0) * 6.0;
  const double x = 1.0 - std::fabs(std::fmod(h, 2.0) - 1.0);
  std::array<double, 3> rgb{};
  switch (static_cast<int>(h)) {
    case 0: rgb = {1, x, 0}; break;
    case 1: rgb = {x, 1, 0}; break;
    case 2: rgb = {0, 1, x}; break;
    case 3: rgb = {0, x, 1}; break;
    case 4: rgb = {x, 0, 1}; break;
    default: rgb = {1, 0, x}; break;
  }
  return {static_cast<float>(rgb[0]), static_cast<float>(rgb[1]), static_cast<float>(rgb[2])};
}

float to_level(double v) { return static_cast<float>(std::nearbyint(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0); }

std::vector<PersonBox> sample_layout(Rng& rng, std::size_t count, std::size_t size) {
  struct Rect {
    std::size_t x0, y0, x1, y1;
  };
  const double n = static_cast<double>(size);
  for (;;) {
    std::vector<Rect> rects;
    for (std::size_t p = 0; p < count; ++p) {
      bool placed = false;
      for (int tries = 0; tries < 100 && !placed; ++tries) {
        const auto w = static_cast<std::size_t>(std::nearbyint(rng.uniform(0.22, 0.34) * n));
        const auto h = static_cast<std::size_t>(std::nearbyint(rng.uniform(0.22, 0.34) * n));
        const std::size_t x0 = rng.below(size - w + 1), y0 = rng.below(size - h + 1);
        const Rect r{x0, y0, x0 + w, y0 + h};
        const bool overlaps = std::any_of(rects.begin(), rects.end(), [&](const Rect& o) {
          return r.x0 < o.x1 && o.x0 < r.x1 && r.y0 < o.y1 && o.y0 < r.y1;
        });
        if (!overlaps) {
          rects.push_back(r);
          placed = true;
        }
      }
      if (!placed) break;
    }
    if (rects.size() == count) {
      std::vector<PersonBox> boxes;
      for (const Rect& r : rects) {
        boxes.push_back(PersonBox{static_cast<double>(r.x0) / n, static_cast<double>(r.y0) / n,
                                  static_cast<double>(r.x1) / n, static_cast<double>(r.y1) / n});
      }
      return boxes;
    }
  }
}

bool near(const PersonBox& a, const PersonBox& b) {
  const double dx = (a.x1 + a.x2) / 2 - (b.x1 + b.x2) / 2;
  const double dy = (a.y1 + a.y2) / 2 - (b.y1 + b.y2) / 2;
  return std::sqrt(dx * dx + dy * dy) < kNearDistance;
}

std::vector<double> checked_profile(const SyntheticConfig& config) {
  if (config.profile.empty()) return std::vector<double>(config.classes, 1.0 / static_cast<double>(config.classes));
  if (config.profile.size() != config.classes) {
    throw ConfigError("class profile has " + std::to_string(config.profile.size()) + " entries for " +
                      std::to_string(config.classes) + " classes");
  }
  double total = 0.0;
  for (double p : config.profile) {
    if (!(p > 0.0) || !std::isfinite(p)) throw ConfigError("class profile entries must be positive and finite");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-6) throw ConfigError("class profile sums to " + std::to_string(total) + ", not 1");
  return config.profile;
}

std::string synthetic_source(std::uint64_t seed) { return "synthetic:" + std::to_string(seed); }

}  // namespace

std::size_t Dataset::max_persons() const {
  std::size_t p = 0;
  for (const auto& im : images) p = std::max(p, im.persons.size());
  return p;
}

std::size_t Dataset::pair_count() const {
  std::size_t n = 0;
  for (const auto& im : images) n += im.relations.size();
  return n;
}

std::size_t synthetic_colour(std::uint64_t seed, std::size_t index, std::size_t classes) {
  return Rng(mix_seed(seed, 1000 + index)).below(classes);
}

Tensor<float> render_synthetic(std::uint64_t seed, const std::vector<PersonBox>& persons, std::size_t size,
                               std::size_t classes) {
  Rng rng(mix_seed(seed, 1));
  const double base = rng.uniform(0.25, 0.55);
  const bool vertical = rng.bernoulli(0.5);
  const std::size_t period = 2 + rng.below(5);
  std::vector<float> px(3 * size * size);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const std::size_t phase = (vertical ? x : y) / period;
        const double stripe = phase % 2 == 0 ? 0.08 : -0.08;
        px[(c * size + y) * size + x] = to_level(base + stripe + rng.uniform(-0.04, 0.04));
      }
  const double n = static_cast<double>(size);
  for (std::size_t p = 0; p < persons.size(); ++p) {
    const auto colour = palette_colour(synthetic_colour(seed, p, classes));
    const PersonBox& b = persons[p];
    const auto x0 = static_cast<std::size_t>(std::floor(b.x1 * n)), x1 = static_cast<std::size_t>(std::ceil(b.x2 * n));
    const auto y0 = static_cast<std::size_t>(std::floor(b.y1 * n)), y1 = static_cast<std::size_t>(std::ceil(b.y2 * n));
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = y0; y < std::min(y1, size); ++y)
        for (std::size_t x = x0; x < std::min(x1, size); ++x) px[(c * size + y) * size + x] = to_level(colour[c]);
  }
  return Tensor<float>(Shape{3, size, size}, std::move(px));
}

Dataset generate_synthetic(const SyntheticConfig& config) {
  if (config.classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (config.images == 0) throw ConfigError("synthetic data needs at least 1 image");
  if (config.min_persons < 2 || config.max_persons < config.min_persons || config.max_persons > 6) {
    throw ConfigError("person range must satisfy 2 <= min <= max <= 6");
  }
  if (config.image_size % kStemStride != 0 || config.image_size < 16) {
    throw ConfigError("image size must be a multiple of " + std::to_string(kStemStride) + " and at least 16");
  }
  const auto profile = checked_profile(config);
  const double top = *std::max_element(profile.begin(), profile.end());

  Dataset ds;
  ds.classes = config.classes;
  ds.images.reserve(config.images);
  for (std::size_t index = 0; index < config.images; ++index) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      const std::uint64_t s = mix_seed(mix_seed(config.seed, index), attempt);
      Rng count_rng(mix_seed(s, 0));
      const std::size_t persons = config.min_persons + count_rng.below(config.max_persons - config.min_persons + 1);
      Rng layout_rng(mix_seed(s, 2));
      auto boxes = sample_layout(layout_rng, persons, config.image_size);

      Rng thin(mix_seed(s, 3));
      std::vector<LabeledPair> relations;
      for (std::size_t i = 0; i < persons; ++i)
        for (std::size_t j = i + 1; j < persons; ++j) {
          const std::size_t cls = (synthetic_colour(s, i, config.classes) + synthetic_colour(s, j, config.classes) +
                                   (near(boxes[i], boxes[j]) ? 1 : 0)) %
                                  config.classes;
          if (thin.bernoulli(profile[cls] / top)) relations.push_back({i, j, cls});
        }
      if (relations.empty()) continue;

      AnnotatedImage im;
      char id[32];
      std::snprintf(id, sizeof id, "img%05zu", index);
      im.id = id;
      im.source = synthetic_source(s);
      im.image = render_synthetic(s, boxes, config.image_size, config.classes);
      im.persons = std::move(boxes);
      im.relations = std::move(relations);
      ds.images.push_back(std::move(im));
      break;
    }
  }
  return ds;
}

std::string to_annotation_json(const Dataset& dataset) {
  std::string out = "[\n";
  for (std::size_t k = 0; k < dataset.images.size(); ++k) {
    const auto& im = dataset.images[k];
    Json obj;
    obj["id"] = im.id;
    obj["image"] = im.source;
    Json persons = Json::array();
    for (const auto& b : im.persons) persons.push_back({b.x1, b.y1, b.x2, b.y2});
    obj["persons"] = persons;
    Json relations = Json::array();
    for (const auto& r : im.relations) relations.push_back({r.i, r.j, r.cls});
    obj["relations"] = relations;
    out += obj.dump();
    out += k + 1 < dataset.images.size() ? ",\n" : "\n";
  }
  out += "]\n";
  return out;
}

void save_annotations(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << to_annotation_json(dataset);
  if (!f) throw IoError("write failed for " + path.string());
}

namespace {

std::size_t line_of(const std::string& text, std::size_t offset) {
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + std::min(offset, text.size()), '\n'));
}

/// Line numbers where each element of the top-level array starts.
std::vector<std::size_t> element_lines(const std::string& text) {
  std::vector<std::size_t> lines;
  int depth = 0;
  bool in_string = false, escaped = false, expecting = false;
  std::size_t line = 1;
  for (char ch : text) {
    if (ch == '\n') ++line;
    if (in_string) {
      if (escaped) escaped = false;
      else if (ch == '\\') escaped = true;
      else if (ch == '"') in_string = false;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    if (depth == 1 && expecting) {
      lines.push_back(line);
      expecting = false;
    }
    switch (ch) {
      case '"': in_string = true; break;
      case '[':
      case '{':
        if (++depth == 1) expecting = true;
        break;
      case ']':
      case '}': --depth; break;
      case ',':
        if (depth == 1) expecting = true;
        break;
      default: break;
    }
  }
  return lines;
}

}  // namespace

Dataset parse_annotations(const std::string& text, const LoadOptions& options, const std::filesystem::path& base,
                          const std::string& origin) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(origin + ":" + std::to_string(line_of(text, e.byte == 0 ? 0 : e.byte - 1)) +
                    ": malformed JSON: " + e.what());
  }
  if (!doc.is_array()) throw DataError(origin + ":1: top level must be a list of images");
  const auto lines = element_lines(text);

  Dataset ds;
  ds.classes = options.classes;
  std::set<std::string> ids;
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const Json& obj = doc[k];
    const std::string where = origin + ":" + std::to_string(k < lines.size() ? lines[k] : 0) + ": ";
    if (!obj.is_object()) throw DataError(where + "entry is not an object");
    for (const char* key : {"id", "image", "persons", "relations"}) {
      if (!obj.contains(key)) throw DataError(where + "missing field '" + key + "'");
    }
    if (!obj["id"].is_string()) throw DataError(where + "field 'id' must be a string");
    AnnotatedImage im;
    im.id = obj["id"].get<std::string>();
    const std::string who = where + "image '" + im.id + "': ";
    if (!ids.insert(im.id).second) throw DataError(who + "duplicate id");
    if (!obj["image"].is_string()) throw DataError(who + "field 'image' must be a string");
    im.source = obj["image"].get<std::string>();

    if (!obj["persons"].is_array()) throw DataError(who + "field 'persons' must be a list");
    for (const Json& b : obj["persons"]) {
      if (!b.is_array() || b.size() != 4 || !std::all_of(b.begin(), b.end(), [](const Json& v) { return v.is_number(); })) {
        throw DataError(who + "each person must be [x1, y1, x2, y2]");
      }
      const double x1 = b[0].get<double>(), y1 = b[1].get<double>(), x2 = b[2].get<double>(), y2 = b[3].get<double>();
      if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
        throw DataError(who + "non-finite box coordinate");
      }
      try {
        im.persons.push_back(PersonBox::clamped(x1, y1, x2, y2));
      } catch (const DataError&) {
        throw DataError(who + "person " + std::to_string(im.persons.size()) + " box " + b.dump() +
                        " is empty after clamping to [0, 1]");
      }
    }

    if (!obj["relations"].is_array()) throw DataError(who + "field 'relations' must be a list");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const Json& r : obj["relations"]) {
      if (!r.is_array() || r.size() != 3 ||
          !std::all_of(r.begin(), r.end(), [](const Json& v) { return v.is_number_unsigned(); })) {
        throw DataError(who + "each relation must be [i, j, class] with non-negative integers");
      }
      const auto i = r[0].get<std::size_t>(), j = r[1].get<std::size_t>(), cls = r[2].get<std::size_t>();
      if (i == j) throw DataError(who + "self-pair relation " + r.dump());
      if (i >= im.persons.size() || j >= im.persons.size()) {
        throw DataError(who + "relation " + r.dump() + " references a missing person");
      }
      if (cls >= options.classes) throw DataError(who + "relation " + r.dump() + " has class out of range");
      const auto key = std::minmax(i, j);
      if (!seen.insert(key).second) throw DataError(who + "pair (" + std::to_string(key.first) + ", " +
                                                    std::to_string(key.second) + ") labelled more than once");
      im.relations.push_back({key.first, key.second, cls});
    }

    if (im.source.rfind("synthetic:", 0) == 0) {
      std::uint64_t seed = 0;
      const std::string digits = im.source.substr(10);
      if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
        throw DataError(who + "bad synthetic source '" + im.source + "'");
      }
      seed = std::stoull(digits);
      im.image = render_synthetic(seed, im.persons, options.image_size, options.classes);
    } else {
      try {
        im.image = read_ppm(base / im.source);
      } catch (const Error& e) {
        throw DataError(who + e.what());
      }
      if (im.image.dim(1) != options.image_size || im.image.dim(2) != options.image_size) {
        throw DataError(who + "image is " + std::to_string(im.image.dim(2)) + "x" + std::to_string(im.image.dim(1)) +
                        ", expected " + std::to_string(options.image_size) + "x" + std::to_string(options.image_size));
      }
    }
    ds.images.push_back(std::move(im));
  }
  return ds;
}

Dataset load_annotations(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_annotations(ss.str(), options, path.parent_path(), path.string());
}

Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  auto token = [&]() {
    std::string t;
    for (;;) {
      int ch = f.get();
      if (ch == EOF) break;
      if (ch == '#') {
        while (ch != EOF && ch != '\n') ch = f.get();
        if (!t.empty()) break;
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(ch));
    }
    return t;
  };
  if (token() != "P6") throw DataError(path.string() + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PPM header");
  }
  if (maxval != 255 || w == 0 || h == 0) throw DataError(path.string() + ": only 8-bit PPM images are supported");
  std::vector<unsigned char> raw(3 * w * h);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (f.gcount() != static_cast<std::streamsize>(raw.size())) throw DataError(path.string() + ": truncated PPM payload");
  std::vector<float> px(3 * w * h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) px[(c * h + y) * w + x] = static_cast<float>(raw[(y * w + x) * 3 + c]) / 255.0f;
  return Tensor<float>(Shape{3, h, w}, std::move(px));
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("write_ppm: expected [3 x H x W]");
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << "P6\n" << w << " " << h << "\n255\n";
  const auto px = image.data();
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(px[(c * h + y) * w + x]), 0.0, 1.0);
        f.put(static_cast<char>(static_cast<unsigned char>(std::nearbyint(v * 255.0))));
      }
}

DatasetStats compute_stats(const Dataset& dataset) {
  if (dataset.images.empty()) throw DataError("dataset has no images");
  DatasetStats s;
  s.images = dataset.images.size();
  s.max_persons = dataset.max_persons();
  s.class_counts.assign(dataset.classes, 0);
  s.unique_histogram.assign(dataset.classes + 1, 0);
  s.persons_histogram.assign(s.max_persons + 1, 0);
  for (const auto& im : dataset.images) {
    std::set<std::size_t> labels;
    for (const auto& r : im.relations) {
      if (r.cls >= dataset.classes) throw DataError("image '" + im.id + "': class out of range");
      ++s.class_counts[r.cls];
      labels.insert(r.cls);
      ++s.pairs;
    }
    ++s.unique_histogram[labels.size()];
    ++s.persons_histogram[im.persons.size()];
  }
  return s;
}

std::string format_stats_table(const DatasetStats& s) {
  std::ostringstream out;
  out << "images " << s.images << ", labelled pairs " << s.pairs << ", max persons " << s.max_persons << "\n\n";
  const bool weighted = std::all_of(s.class_counts.begin(), s.class_counts.end(), [](std::size_t n) { return n > 0; });
  const auto w = weighted ? compute_class_weights(s.class_counts) : ClassWeights{};
  char buf[96];
  out << "class     pairs   share   weight\n";
  for (std::size_t c = 0; c < s.class_counts.size(); ++c) {
    const double share = s.pairs ? 100.0 * static_cast<double>(s.class_counts[c]) / static_cast<double>(s.pairs) : 0.0;
    if (weighted) {
      std::snprintf(buf, sizeof buf, "%5zu  %8zu  %5.1f%%  %7.3f\n", c, s.class_counts[c], share, w.weights[c]);
    } else {
      std::snprintf(buf, sizeof buf, "%5zu  %8zu  %5.1f%%        -\n", c, s.class_counts[c], share);
    }
    out << buf;
  }
  out << "\nunique labels per image\n";
  for (std::size_t k = 0; k < s.unique_histogram.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%5zu  %8zu\n", k, s.unique_histogram[k]);
    out << buf;
  }
  out << "\npersons per image\n";
  for (std::size_t k = 0; k < s.persons_histogram.size(); ++k) {
    if (s.persons_histogram[k] == 0) continue;
    std::snprintf(buf, sizeof buf, "%5zu  %8zu\n", k, s.persons_histogram[k]);
    out << buf;
  }
  return out.str();
}

std::string format_stats_key_values(const DatasetStats& s) {
  std::ostringstream out;
  out << "images = " << s.images << "\npairs = " << s.pairs << "\nmax_persons = " << s.max_persons << "\n";
  for (std::size_t c = 0; c < s.class_counts.size(); ++c) out << "count." << c << " = " << s.class_counts[c] << "\n";
  if (std::all_of(s.class_counts.begin(), s.class_counts.end(), [](std::size_t n) { return n > 0; })) {
    const auto w = compute_class_weights(s.class_counts);
    char buf[64];
    for (std::size_t c = 0; c < w.weights.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", w.weights[c]);
      out << "weight." << c << " = " << buf << "\n";
    }
  }
  for (std::size_t k = 0; k < s.unique_histogram.size(); ++k) out << "unique." << k << " = " << s.unique_histogram[k] << "\n";
  for (std::size_t k = 0; k < s.persons_histogram.size(); ++k) out << "persons." << k << " = " << s.persons_histogram[k] << "\n";
  return out.str();
}

std::pair<Dataset, Dataset> split_tail(const Dataset& dataset, std::size_t test) {
  if (test >= dataset.images.size()) throw ConfigError("test split must leave at least one training image");
  Dataset train, eval;
  train.classes = eval.classes = dataset.classes;
  const std::size_t cut = dataset.images.size() - test;
  train.images.assign(dataset.images.begin(), dataset.images.begin() + static_cast<std::ptrdiff_t>(cut));
  eval.images.assign(dataset.images.begin() + static_cast<std::ptrdiff_t>(cut), dataset.images.end());
  return {std::move(train), std::move(eval)};
}

}  // namespace rgnet
