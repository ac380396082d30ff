// SPDX-License-Identifier: Apache-2.0
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rgnet/cli.hpp"
#include "rgnet/error.hpp"
#include "rgnet/gradcheck.hpp"
#include "rgnet/loss.hpp"
#include "rgnet/metrics.hpp"
#include "rgnet/model.hpp"
#include "rgnet/qat.hpp"
#include "rgnet/trainer.hpp"
#include "test_util.hpp"

using namespace rgnet;
using namespace rgnet::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::set<std::string> names;
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& r : run_gradient_suite(seed)) {
      names.insert(r.name);
      ++checks;
      if (r.relative_error > worst || !std::isfinite(r.relative_error)) {
        worst = r.relative_error;
        worst_name = r.name;
      }
    }
  }
  const double elapsed = seconds_since(t0);
  bool covered = true;
  for (const char* required : {"stem", "stem_se_gap", "stem_se_roi", "gqm_concat_query", "gqm_edge_query", "trm_encoder",
                               "trm_decoder_head", "weighted_bce", "full_pipeline"})
    covered = covered && names.count(required);
  return {worst <= kGradCheckTolerance && covered && elapsed < 60.0,
          fmt("%zu checks over 5 seeds, worst rel. error %.2e (%s), modules covered %s, %.1f s", checks, worst,
              worst_name.c_str(), covered ? "yes" : "NO", elapsed)};
}

Outcome symmetry() {
  // Edge queries already make the decoder symmetric in (i, j), so the
  // contrast uses concatenated endpoint queries.
  std::size_t compared = 0, asymmetric_models = 0;
  bool symmetric = true;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SyntheticConfig sc;
    sc.images = 1;
    sc.seed = 1000 + seed;
    const auto im = generate_synthetic(sc).images[0];
    ModelConfig on;
    on.toggles.edge_query = seed % 2 == 0;
    ModelConfig off;
    off.toggles.edge_query = false;
    off.toggles.logit_transform = false;
    const auto s = Model<float>(on, seed).forward({}, im.image, im.persons).scores;
    const auto r = Model<float>(off, seed).forward({}, im.image, im.persons).scores;
    const std::size_t p = s.dim(0), c = s.dim(2);
    bool asym = false;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j)
        for (std::size_t k = 0; k < c; ++k) {
          const float a = s[(i * p + j) * c + k], b = s[(j * p + i) * c + k];
          symmetric = symmetric && std::memcmp(&a, &b, sizeof a) == 0;
          ++compared;
          if (i != j && i < im.persons.size() && j < im.persons.size())
            asym = asym || r[(i * p + j) * c + k] != r[(j * p + i) * c + k];
        }
    asymmetric_models += asym;
  }
  return {symmetric && asymmetric_models > 0,
          fmt("100 models (edge and concat queries): %zu score pairs bit-identical: %s; without the transform "
              "%zu/100 models asymmetric",
              compared, symmetric ? "yes" : "NO", asymmetric_models)};
}

Matrix rows_of(const Tensor<double>& t) {
  Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t r = 0; r < t.dim(0); ++r)
    for (std::size_t c = 0; c < t.dim(1); ++c) m[r][c] = t[r * t.dim(1) + c];
  return m;
}

Outcome gqm_oracle() {
  Rng rng(3);
  std::size_t graphs = 0, mismatches = 0, perm_mismatches = 0;
  const ForwardContext<double> ctx;
  for (std::size_t p = 2; p <= 6; ++p)
    for (std::size_t d = 2; d <= 8; ++d)
      for (int trial = 0; trial < 5; ++trial) {
        RelationGraph<double> g;
        g.pairs = PairList::complete(p);
        g.h = random_tensor(rng, {p, d});
        g.e = random_tensor(rng, {p * (p - 1), d});
        Matrix h = rows_of(g.h);
        std::vector<Matrix> e(p, Matrix(p, std::vector<double>(d, 0.0)));
        const Matrix flat = rows_of(g.e);
        for (std::size_t k = 0; k < g.pairs.size(); ++k) e[g.pairs.first[k]][g.pairs.second[k]] = flat[k];
        for (int t = 0; t < 2; ++t) {
          const GqmLayer<double> layer{random_tensor(rng, {d, d}, -0.8, 0.8), random_tensor(rng, {d, d}, -0.8, 0.8),
                                       random_tensor(rng, {d, d}, -0.8, 0.8)};
          g.e = edge_update(ctx, g, layer);
          g.h = vertex_update(ctx, g, layer);
          gqm_iteration(h, e, rows_of(layer.w_edge_h), rows_of(layer.w_e), rows_of(layer.w_vertex_h));
        }
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t k = 0; k < d; ++k) mismatches += g.h[i * d + k] != h[i][k];
        for (std::size_t m = 0; m < g.pairs.size(); ++m)
          for (std::size_t k = 0; k < d; ++k) mismatches += g.e[m * d + k] != e[g.pairs.first[m]][g.pairs.second[m]][k];
        ++graphs;

        // Permutation equivariance through the full module.
        ParamStore<double> store(rng.next());
        const Gqm<double> gqm(store, 5, 5, d, 2);
        const auto x = random_tensor(rng, {p, 5});
        const auto glob = random_tensor(rng, {5});
        std::vector<std::size_t> perm(p);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t k = p - 1; k > 0; --k) std::swap(perm[k], perm[rng.below(k + 1)]);
        const auto a = gqm.run(ctx, gqm.init(ctx, x, glob));
        const auto b = gqm.run(ctx, gqm.init(ctx, gather_rows(x, std::span<const std::size_t>(perm)), glob));
        const auto qa = extract_queries(a, QueryMode::kEdge), qb = extract_queries(b, QueryMode::kEdge);
        for (std::size_t i = 0; i < p; ++i) {
          for (std::size_t k = 0; k < d; ++k) perm_mismatches += b.h[i * d + k] != a.h[perm[i] * d + k];
          for (std::size_t j = 0; j < p; ++j)
            for (std::size_t k = 0; k < d; ++k)
              perm_mismatches += qb[(i * p + j) * d + k] != qa[(perm[i] * p + perm[j]) * d + k];
        }
      }
  return {mismatches == 0 && perm_mismatches == 0,
          fmt("%zu random graphs (P 2..6, d 2..8): %zu oracle mismatches, %zu permutation mismatches", graphs,
              mismatches, perm_mismatches)};
}

Outcome class_weights() {
  const std::vector<std::size_t> a{10, 10}, b{10, 30};
  bool ok = compute_class_weights(a).weights == std::vector<double>{4.0, 4.0} &&
            compute_class_weights(b).weights == std::vector<double>{8.0, 8.0 / 3.0};
  for (std::size_t c = 2; c <= 16; ++c)
    for (std::size_t n : {1u, 3u, 250u}) {
      const std::vector<std::size_t> counts(c, n);
      for (double w : compute_class_weights(counts).weights) ok = ok && w == 2.0 * static_cast<double>(c);
    }
  return {ok, "[10,10] -> [4,4], [10,30] -> [8,8/3], equal counts -> 2C (C = 2..16)"};
}

Outcome metric_oracles() {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t classes = 2 + rng.below(6);
    std::vector<EvalRecord> records(1 + rng.below(64));
    const bool coarse = trial % 2 == 0;
    for (auto& r : records) {
      r.truth = rng.below(classes);
      for (std::size_t c = 0; c < classes; ++c)
        r.scores.push_back(coarse ? static_cast<double>(rng.below(4)) : rng.uniform(-3, 3));
    }
    double total = 0.0;
    int counted = 0;
    std::vector<std::size_t> hits(classes), totals(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<double> s;
      std::vector<bool> pos;
      for (const auto& r : records) {
        s.push_back(r.scores[c]);
        pos.push_back(r.truth == c);
      }
      if (auto ap = brute_average_precision(s, pos)) {
        total += *ap;
        ++counted;
      }
    }
    for (const auto& r : records) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (r.scores[c] > r.scores[best]) best = c;
      ++totals[r.truth];
      hits[r.truth] += best == r.truth;
    }
    worst = std::max(worst, std::fabs(mean_average_precision(records, classes).map - 100.0 * total / counted));
    const auto recall = per_class_recall(records, classes);
    for (std::size_t c = 0; c < classes; ++c) {
      if (totals[c] == 0) {
        if (recall[c]) worst = INFINITY;
      } else {
        worst = std::max(worst, std::fabs(*recall[c] - 100.0 * hits[c] / totals[c]));
      }
    }
  }
  const double hand = *average_precision({0.9, 0.8, 0.7}, {true, false, true});
  const bool hand_ok = std::fabs(hand - 5.0 / 6.0) <= 1e-15;
  return {worst <= 1e-9 && hand_ok,
          fmt("1000 record sets: max deviation %.2e; AP([0.9,0.8,0.7],[1,0,1]) = %.17g", worst, hand)};
}

Outcome masking() {
  SyntheticConfig sc;
  sc.images = 60;
  sc.seed = 77;
  const auto data = generate_synthetic(sc);
  double worst = 0.0;
  bool doubled = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Model<float> model(ModelConfig{}, seed);
    const auto uni = evaluate(model, data, MaskMode::kUnilateral);
    const auto bi = evaluate(model, data, MaskMode::kBilateral);
    doubled = doubled && bi.records.size() == 2 * uni.records.size() && uni.records.size() == data.pair_count();
    worst = std::max(worst, std::fabs(bi.report.map.map - uni.report.map.map));
  }
  return {doubled && worst <= 1e-9,
          fmt("%zu unilateral pairs, bilateral exactly 2x: %s; max |mAP difference| %.2e over 5 models",
              data.pair_count(), doubled ? "yes" : "NO", worst)};
}

Outcome overfit() {
  const auto t0 = Clock::now();
  SyntheticConfig sc;
  sc.images = 16;
  sc.classes = 6;
  sc.seed = 1;
  const auto data = generate_synthetic(sc);
  ModelConfig cfg;
  cfg.train.batch_size = 1;
  TrainState state(cfg);
  TrainOptions opts;
  opts.epochs = 1;
  double best = 0.0;
  std::size_t reached = 0;
  for (std::size_t epoch = 1; epoch <= 300 && reached == 0; ++epoch) {
    const auto log = train(state, data, opts).back();
    best = std::max(best, log.accuracy);
    if (log.accuracy >= 0.95) reached = epoch;
  }
  const double elapsed = seconds_since(t0);
  return {reached > 0 && elapsed < 300.0,
          reached ? fmt("16 images, C=6: %.1f%% pair accuracy at epoch %zu, %.1f s", 100 * best, reached, elapsed)
                  : fmt("16 images, C=6: best %.1f%% pair accuracy in 300 epochs, %.1f s", 100 * best, elapsed)};
}

Outcome quantization_sizes() {
  SyntheticConfig sc;
  sc.images = 20;
  sc.seed = 4;
  const auto data = generate_synthetic(sc);
  const Model<float> model(ModelConfig{}, 3);
  QuantState quant;
  calibrate(model, data, quant);
  const auto q = export_quantized(model, quant);
  const auto size = size_report(model, q);

  // Every level of random schemes, plus values spread through each bin.
  Rng rng(8);
  double worst_excess = -INFINITY;
  std::size_t samples = 0;
  for (int s = 0; s < 200; ++s) {
    const auto scheme = activation_scheme(rng.uniform(-10, 0), rng.uniform(0, 10));
    std::vector<double> x;
    for (int level = kQuantMin; level <= kQuantMax; ++level)
      for (int k = 0; k < 16; ++k)
        x.push_back(static_cast<double>(level - scheme.zero_point) * scheme.scale + rng.uniform(-0.5, 0.5) * scheme.scale);
    const auto dq = dequantize<double>(quantize<double>(x, scheme), scheme);
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double level = unclamped_level(x[k], scheme.scale, scheme.zero_point);
      if (level < kQuantMin || level > kQuantMax) continue;
      worst_excess = std::max(worst_excess, std::fabs(dq[k] - x[k]) - scheme.scale / 2);
      ++samples;
    }
  }
  for (const auto& t : q.params) {
    const auto* p = model.store().find(t.name);
    for (std::size_t k = 0; k < t.levels.size(); ++k) {
      const double dq = dequantize_value(t.levels[k], t.scheme.scale, t.scheme.zero_point);
      worst_excess = std::max(worst_excess, std::fabs(dq - static_cast<double>(p->value[k])) - t.scheme.scale / 2);
      ++samples;
    }
  }
  const bool ok = size.payload_ratio() == 0.25 && size.file_ratio() <= 0.35 && worst_excess <= 0.0;
  return {ok, fmt("%zu parameters: payload ratio %.6f, file ratio %.4f; %zu dequantized values, max |dq - x| - "
                  "scale/2 = %.3e",
                  size.parameters, size.payload_ratio(), size.file_ratio(), samples, worst_excess)};
}

Outcome qat_drop() {
  const auto t0 = Clock::now();
  SyntheticConfig sc;
  sc.images = 500;
  sc.classes = 6;
  sc.seed = 11;
  const auto [train_set, test_set] = split_tail(generate_synthetic(sc), 100);
  ModelConfig cfg;
  cfg.train.batch_size = 4;
  TrainState state(cfg);
  TrainOptions opts;
  opts.epochs = 60;
  opts.evaluate_each_epoch = false;
  train(state, train_set, opts);
  const auto report = quantize_model(state, train_set, test_set, QuantizeOptions{});
  const double elapsed = seconds_since(t0);
  const double drop = report.fp32.map.map - report.int8.map.map;
  return {std::fabs(drop) <= 2.0 && elapsed < 900.0,
          fmt("400/100 split: FP32 mAP %.2f, INT8 mAP %.2f, difference %.2f points, %.1f s", report.fp32.map.map,
              report.int8.map.map, drop, elapsed)};
}

Outcome determinism() {
  SyntheticConfig sc;
  sc.images = 16;
  sc.seed = 5;
  const auto data = generate_synthetic(sc);
  ModelConfig cfg;
  cfg.train.batch_size = 4;
  cfg.train.seed = 21;
  auto run = [&](TrainState& s, std::size_t epochs) {
    TrainOptions o;
    o.epochs = epochs;
    std::vector<std::string> lines;
    for (const auto& l : train(s, data, o)) lines.push_back(to_json_line(l));
    return lines;
  };
  TrainState a(cfg), b(cfg);
  const auto la = run(a, 4), lb = run(b, 4);
  const bool same_runs = la == lb && a.to_checkpoint().serialize() == b.to_checkpoint().serialize();

  TrainState c(cfg);
  auto lc = run(c, 2);
  const auto path = fs::temp_directory_path() / "rgnet_acceptance_resume.rgn";
  c.save(path);
  TrainState d = TrainState::load(path);
  fs::remove(path);
  const auto more = run(d, 2);
  lc.insert(lc.end(), more.begin(), more.end());
  const bool same_resume = lc == la && d.to_checkpoint().serialize() == a.to_checkpoint().serialize();
  return {same_runs && same_resume, fmt("two 4-epoch runs identical: %s; 2+2 resume identical to 4: %s",
                                        same_runs ? "yes" : "NO", same_resume ? "yes" : "NO")};
}

Outcome ablation() {
  SyntheticConfig sc;
  sc.images = 6;
  sc.seed = 9;
  const auto data = generate_synthetic(sc);
  std::size_t completed = 0;
  std::string failure;
  for (unsigned bits = 0; bits < 32; ++bits) {
    try {
      ModelConfig cfg = with_toggles(ModelConfig{}, bits);
      cfg.train.batch_size = 3;
      TrainState state(cfg);
      TrainOptions o;
      o.epochs = 1;
      train(state, data, o);
      evaluate(state.model, data, cfg.toggles.bilateral ? MaskMode::kBilateral : MaskMode::kUnilateral);
      ++completed;
    } catch (const std::exception& e) {
      if (failure.empty()) failure = fmt(" (first failure, toggles %u: %s)", bits, e.what());
    }
  }

  const auto dir = fs::temp_directory_path() / "rgnet_acceptance_ablate";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_annotations(data, dir / "data.json");
  const std::string data_path = (dir / "data.json").string(), out_path = dir.string();
  const char* argv[] = {"rgnet", "ablate", "--data", data_path.c_str(), "--epochs", "1", "--out", out_path.c_str()};
  std::ostringstream out, err;
  const int code = run_cli(8, argv, out, err);
  std::ifstream f(dir / "ablation.txt");
  std::string line;
  std::size_t rows = 0;
  bool ordered = true;
  const char* expected[] = {"WBCE", "+Bilateral", "+Logit", "+GQM", "+SE"};
  std::getline(f, line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ordered = ordered && rows < 5 && line.rfind(expected[rows], 0) == 0;
    ++rows;
  }
  fs::remove_all(dir);
  return {completed == 32 && code == 0 && rows == 5 && ordered,
          fmt("%zu/32 toggle combinations ran%s; ablate exit %d with %zu cumulative rows", completed,
              failure.c_str(), code, rows)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"logit symmetry", symmetry},
      {"graph query oracle", gqm_oracle},
      {"class weights", class_weights},
      {"metric oracles", metric_oracles},
      {"pair masking", masking},
      {"overfit smoke", overfit},
      {"int8 sizes and error", quantization_sizes},
      {"qat drop", qat_drop},
      {"determinism", determinism},
      {"ablation harness", ablation},
  };
  std::set<int> selected;
  for (int k = 1; k < argc; ++k) selected.insert(std::atoi(argv[k]));
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int number = static_cast<int>(k + 1);
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %-22s %s\n", o.pass ? "PASS" : "FAIL", number, criteria[k].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
