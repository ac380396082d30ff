// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace rgnet {

/// Scores of one evaluated ordered pair.
struct EvalRecord {
  std::vector<double> scores;  // one per class
  std::size_t truth = 0;
  std::string image_id;
  std::size_t i = 0, j = 0;
};

/// Recall per class in percent; nullopt for a class with no pairs. The
/// predicted class is the argmax, ties going to the lowest index. Throws
/// DataError for empty input.
std::vector<std::optional<double>> per_class_recall(const std::vector<EvalRecord>& records, std::size_t classes);

/// Average precision of one class. Precision at a positive with score s is the
/// fraction of positives among all items scoring >= s, so tied items are
/// ranked together rather than by input order. Returns nullopt without
/// positives.
std::optional<double> average_precision(const std::vector<double>& scores, const std::vector<bool>& positive);

struct MapResult {
  double map = 0.0;                         // percent
  std::vector<std::optional<double>> ap;    // per class, percent
  std::vector<std::size_t> skipped;         // classes without positives
};

/// Mean over classes with at least one positive. Throws DataError for empty
/// input or when no class has positives.
MapResult mean_average_precision(const std::vector<EvalRecord>& records, std::size_t classes);

/// Fraction of records whose argmax equals the truth.
double pair_accuracy(const std::vector<EvalRecord>& records);

/// Per-class recall columns plus mAP.
struct MetricsReport {
  std::vector<std::optional<double>> recall;
  MapResult map;
  std::size_t pairs = 0;
  double accuracy = 0.0;
};

MetricsReport summarize(const std::vector<EvalRecord>& records, std::size_t classes);
std::string format_table(const MetricsReport& report, const std::vector<std::string>& class_names = {});
std::string format_key_values(const MetricsReport& report);

}  // namespace rgnet
