// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgnet/backbone.hpp"
#include "rgnet/loss.hpp"

namespace rgnet {

/// One image with its person boxes and labelled pairs. Relations are stored
/// once per unordered pair with i < j.
struct AnnotatedImage {
  std::string id;
  std::string source;  // "synthetic:<seed>" or a path relative to the annotation file
  Tensor<float> image;  // [3 x H x W] in [0, 1]
  std::vector<PersonBox> persons;
  std::vector<LabeledPair> relations;
};

struct Dataset {
  std::size_t classes = 0;
  std::vector<AnnotatedImage> images;

  std::size_t max_persons() const;
  std::size_t pair_count() const;
};

struct SyntheticConfig {
  std::size_t images = 16;
  std::size_t classes = 6;
  std::size_t min_persons = 2;
  std::size_t max_persons = 4;
  std::size_t image_size = 32;
  /// Target class marginals; empty means uniform. Must have one positive entry
  /// per class summing to 1.
  std::vector<double> profile;
  std::uint64_t seed = 0;
};

/// Persons are flat-coloured rectangles on a striped, noisy background. The
/// class of a pair is (colour_i + colour_j + near) mod C, where `near` is 1
/// when the box centres are closer than kNearDistance. Pairs are thinned to
/// follow the requested class profile. Throws ConfigError for an infeasible
/// profile or person range.
Dataset generate_synthetic(const SyntheticConfig& config);

inline constexpr double kNearDistance = 0.35;

/// Colour index of person `index` in the synthetic image with seed `seed`.
std::size_t synthetic_colour(std::uint64_t seed, std::size_t index, std::size_t classes);

/// Renders the synthetic image for a seed and box list.
Tensor<float> render_synthetic(std::uint64_t seed, const std::vector<PersonBox>& persons, std::size_t size,
                               std::size_t classes);

struct LoadOptions {
  std::size_t classes = 6;
  std::size_t image_size = 32;
};

/// JSON list of {"id", "image", "persons", "relations"} objects, one per line.
std::string to_annotation_json(const Dataset& dataset);
void save_annotations(const Dataset& dataset, const std::filesystem::path& path);

/// Parses and validates annotations; errors name the line and image id.
/// `base` resolves relative image paths (binary PPM).
Dataset parse_annotations(const std::string& text, const LoadOptions& options,
                          const std::filesystem::path& base = {}, const std::string& origin = "<memory>");
Dataset load_annotations(const std::filesystem::path& path, const LoadOptions& options);

/// Binary PPM (P6, maxval 255) -> [3 x H x W] in [0, 1].
Tensor<float> read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);

struct DatasetStats {
  std::size_t images = 0;
  std::size_t pairs = 0;
  std::size_t max_persons = 0;
  std::vector<std::size_t> class_counts;       // n_c
  std::vector<std::size_t> unique_histogram;   // [k] = images with k distinct labels
  std::vector<std::size_t> persons_histogram;  // [k] = images with k persons
};

/// Throws DataError for an empty dataset.
DatasetStats compute_stats(const Dataset& dataset);
std::string format_stats_table(const DatasetStats& stats);
/// Includes the class weights when every class is present.
std::string format_stats_key_values(const DatasetStats& stats);

/// Splits off the last `test` images.
std::pair<Dataset, Dataset> split_tail(const Dataset& dataset, std::size_t test);

}  // namespace rgnet
