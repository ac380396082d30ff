// SPDX-License-Identifier: Apache-2.0
#include "rgnet/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "rgnet/error.hpp"

namespace rgnet {

namespace {

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < v.size(); ++c)
    if (v[c] > v[best]) best = c;
  return best;
}

void check_records(const std::vector<EvalRecord>& records, std::size_t classes) {
  if (records.empty()) throw DataError("no evaluation records");
  for (const auto& r : records) {
    if (r.scores.size() != classes) throw ShapeError("evaluation record with " + std::to_string(r.scores.size()) +
                                                     " scores for " + std::to_string(classes) + " classes");
    if (r.truth >= classes) throw DataError("evaluation record truth out of range");
  }
}

std::string fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<std::optional<double>> per_class_recall(const std::vector<EvalRecord>& records, std::size_t classes) {
  check_records(records, classes);
  std::vector<std::size_t> hits(classes, 0), totals(classes, 0);
  for (const auto& r : records) {
    ++totals[r.truth];
    if (argmax(r.scores) == r.truth) ++hits[r.truth];
  }
  std::vector<std::optional<double>> out(classes);
  for (std::size_t c = 0; c < classes; ++c)
    if (totals[c] > 0) out[c] = 100.0 * static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
  return out;
}

std::optional<double> average_precision(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ShapeError("average_precision: score/label length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t positives_total = 0;
  for (bool p : positive) positives_total += p ? 1 : 0;
  if (positives_total == 0) return std::nullopt;

  // Walk groups of equal score; every positive in a group shares the
  // precision measured at the end of the group.
  double sum = 0.0;
  std::size_t seen = 0, seen_pos = 0;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start, group_pos = 0;
    while (end < order.size() && scores[order[end]] == scores[order[start]]) {
      group_pos += positive[order[end]] ? 1 : 0;
      ++end;
    }
    seen += end - start;
    seen_pos += group_pos;
    sum += static_cast<double>(group_pos) * (static_cast<double>(seen_pos) / static_cast<double>(seen));
    start = end;
  }
  return sum / static_cast<double>(positives_total);
}

MapResult mean_average_precision(const std::vector<EvalRecord>& records, std::size_t classes) {
  check_records(records, classes);
  MapResult result;
  result.ap.resize(classes);
  std::vector<double> scores(records.size());
  std::vector<bool> positive(records.size());
  double total = 0.0;
  std::size_t evaluated = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t k = 0; k < records.size(); ++k) {
      scores[k] = records[k].scores[c];
      positive[k] = records[k].truth == c;
    }
    if (auto ap = average_precision(scores, positive)) {
      result.ap[c] = 100.0 * *ap;
      total += *ap;
      ++evaluated;
    } else {
      result.skipped.push_back(c);
    }
  }
  if (evaluated == 0) throw DataError("no class has a positive pair");
  result.map = 100.0 * total / static_cast<double>(evaluated);
  return result;
}

double pair_accuracy(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw DataError("no evaluation records");
  std::size_t hits = 0;
  for (const auto& r : records) hits += argmax(r.scores) == r.truth ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

MetricsReport summarize(const std::vector<EvalRecord>& records, std::size_t classes) {
  MetricsReport report;
  report.recall = per_class_recall(records, classes);
  report.map = mean_average_precision(records, classes);
  report.pairs = records.size();
  report.accuracy = pair_accuracy(records);
  return report;
}

std::string format_table(const MetricsReport& report, const std::vector<std::string>& class_names) {
  std::vector<std::string> header, row;
  for (std::size_t c = 0; c < report.recall.size(); ++c) {
    header.push_back(c < class_names.size() ? class_names[c] : "class" + std::to_string(c));
    row.push_back(report.recall[c] ? fixed(*report.recall[c]) : "-");
  }
  header.push_back("mAP");
  row.push_back(fixed(report.map.map));
  std::string top, bottom, rule;
  for (std::size_t k = 0; k < header.size(); ++k) {
    const std::size_t w = std::max(header[k].size(), row[k].size()) + 2;
    top += std::string(w - header[k].size(), ' ') + header[k];
    bottom += std::string(w - row[k].size(), ' ') + row[k];
    rule += std::string(w, '-');
  }
  return top + "\n" + rule + "\n" + bottom + "\n";
}

std::string format_key_values(const MetricsReport& report) {
  std::string out;
  for (std::size_t c = 0; c < report.recall.size(); ++c) {
    out += "recall." + std::to_string(c) + " = " + (report.recall[c] ? fixed(*report.recall[c], 6) : "nan") + "\n";
  }
  for (std::size_t c = 0; c < report.map.ap.size(); ++c) {
    out += "ap." + std::to_string(c) + " = " + (report.map.ap[c] ? fixed(*report.map.ap[c], 6) : "nan") + "\n";
  }
  out += "mAP = " + fixed(report.map.map, 6) + "\n";
  out += "pairs = " + std::to_string(report.pairs) + "\n";
  out += "accuracy = " + fixed(report.accuracy, 6) + "\n";
  return out;
}

}  // namespace rgnet
