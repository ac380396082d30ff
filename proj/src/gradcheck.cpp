// SPDX-License-Identifier: Apache-2.0
#include "rgnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rgnet/backbone.hpp"
#include "rgnet/error.hpp"
#include "rgnet/gqm.hpp"
#include "rgnet/loss.hpp"
#include "rgnet/model.hpp"
#include "rgnet/ops.hpp"
#include "rgnet/rng.hpp"
#include "rgnet/trm.hpp"

namespace rgnet {

GradCheckResult check_gradients(const std::string& name, const std::function<Tensor<double>()>& loss,
                                const std::vector<Tensor<double>>& inputs, double step) {
  for (auto t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor<double> value;
    {
      TapeScope scope(tape);
      value = loss();
    }
    tape.backward(value);
  }

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  std::size_t coords = 0;
  for (auto t : inputs) {
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(t.numel(), 0.0);
    auto values = t.mutable_data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + step;
      const double up = loss().item();
      values[k] = saved - step;
      const double down = loss().item();
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (analytic[k] - numeric) * (analytic[k] - numeric);
      a2 += analytic[k] * analytic[k];
      n2 += numeric * numeric;
      ++coords;
    }
    t.zero_grad();
  }
  GradCheckResult r;
  r.name = name;
  r.coordinates = coords;
  r.relative_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-7});
  return r;
}

namespace {

using TD = Tensor<double>;

TD random(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return TD(std::move(shape), std::move(v));
}

/// Scalar probe: sum(out * r) with a fixed random r of the same shape.
TD probe(const TD& out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, random(rng, out.shape(), -1.0, 1.0)));
}

std::vector<TD> params_of(const ParamStore<double>& store) {
  std::vector<TD> out;
  for (const auto& p : store.params()) out.push_back(p.value);
  return out;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.dims.image_size = 16;
  c.dims.stem_width = 3;
  c.dims.feature_channels = 4;
  c.dims.hidden = 6;
  c.dims.model_width = 8;
  c.dims.heads = 2;
  c.dims.ffn_width = 8;
  c.dims.roi_grid = 2;
  c.dims.max_persons = 3;
  c.dims.classes = 3;
  c.dims.gqm_iterations = 2;
  c.dims.se_reduction = 2;
  return c;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradCheckResult> results;
  Rng rng(mix_seed(seed, 0x6763));
  const std::uint64_t ps = mix_seed(seed, 1);
  const ForwardContext<double> ctx;

  {
    auto a = random(rng, {3, 4}), b = random(rng, {3, 4});
    results.push_back(check_gradients("add", [&] { return probe(add(a, b), ps); }, {a, b}));
    results.push_back(check_gradients("sub", [&] { return probe(sub(a, b), ps); }, {a, b}));
    results.push_back(check_gradients("mul", [&] { return probe(mul(a, b), ps); }, {a, b}));
    results.push_back(check_gradients("neg", [&] { return probe(neg(a), ps); }, {a}));
    results.push_back(check_gradients("scale", [&] { return probe(scale(a, 0.7), ps); }, {a}));
    results.push_back(check_gradients("relu", [&] { return probe(relu(a), ps); }, {a}));
    results.push_back(check_gradients("sigmoid", [&] { return probe(sigmoid(a), ps); }, {a}));
    auto pos = random(rng, {3, 4}, 0.1, 2.0);
    results.push_back(check_gradients("log", [&] { return probe(log(pos), ps); }, {pos}));
  }
  {
    auto a = random(rng, {4, 3}), b = random(rng, {3, 5});
    results.push_back(check_gradients("matmul", [&] { return probe(matmul(a, b), ps); }, {a, b}));
  }
  {
    auto x = random(rng, {2, 3, 4});
    results.push_back(check_gradients("sum", [&] { return scale(sum(x), 0.3); }, {x}));
    results.push_back(check_gradients("mean_axes", [&] { return probe(mean(x, {0, 2}), ps); }, {x}));
    results.push_back(check_gradients("sum_axes", [&] { return probe(sum(x, {1}), ps); }, {x}));
    results.push_back(check_gradients("transpose", [&] { return probe(transpose(x), ps); }, {x}));
    results.push_back(check_gradients("slice", [&] { return probe(slice(x, 2, 1, 2), ps); }, {x}));
    results.push_back(check_gradients("reshape", [&] { return probe(reshape(x, {6, 4}), ps); }, {x}));
    auto y = random(rng, {2, 2, 4});
    results.push_back(check_gradients("concat", [&] { return probe(concat<double>({x, y}, 1), ps); }, {x, y}));
  }
  {
    auto x = random(rng, {3, 5});
    const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
    results.push_back(check_gradients("softmax", [&] { return probe(softmax(x), ps); }, {x}));
    results.push_back(check_gradients("softmax_masked", [&] { return probe(softmax(x, mask), ps); }, {x}));
    auto v = random(rng, {5});
    results.push_back(check_gradients("expand_rows", [&] { return probe(expand_rows(v, 3), ps); }, {v}));
    const std::vector<std::size_t> idx{2, 0, 2, 1};
    results.push_back(check_gradients("gather_rows", [&] { return probe(gather_rows(x, idx), ps); }, {x}));
    auto m = random(rng, {4, 5});
    results.push_back(
        check_gradients("scatter_add_rows", [&] { return probe(scatter_add_rows(m, idx, 3), ps); }, {m}));
    auto g = random(rng, {5}), b = random(rng, {5});
    results.push_back(check_gradients("layer_norm", [&] { return probe(layer_norm(x, g, b), ps); }, {x, g, b}));
  }
  {
    auto x = random(rng, {2, 6, 6}), w = random(rng, {3, 2, 3, 3}), b = random(rng, {3});
    results.push_back(check_gradients("conv2d", [&] { return probe(conv2d(x, w, b, 1, 1), ps); }, {x, w, b}));
    results.push_back(
        check_gradients("conv2d_stride2", [&] { return probe(conv2d(x, w, TD{}, 2, 1), ps); }, {x, w}));
    results.push_back(check_gradients("avg_pool2d", [&] { return probe(avg_pool2d(x, 2), ps); }, {x}));
    results.push_back(
        check_gradients("roi_pool", [&] { return probe(roi_pool(x, CellRegion{1, 6, 0, 4}, 3), ps); }, {x}));
    auto cube = random(rng, {3, 3, 2});
    results.push_back(check_gradients("symmetrize_pairs", [&] { return probe(symmetrize_pairs(cube), ps); }, {cube}));
  }
  {
    ParamStore<double> store(mix_seed(seed, 2));
    Stem<double> stem(store, 3, 4);
    SEGate<double> se(store, 4, 2);
    auto image = random(rng, {3, 16, 16}, 0.0, 1.0);
    results.push_back(check_gradients("stem", [&] { return probe(stem(ctx, image), ps); }, params_of(store)));
    results.push_back(check_gradients(
        "stem_se_gap", [&] { return probe(gap(se(ctx, stem(ctx, image))), ps); }, params_of(store)));
    const PersonBox box{0.1, 0.2, 0.8, 0.9};
    results.push_back(check_gradients(
        "stem_se_roi", [&] { return probe(roi_pool(se(ctx, stem(ctx, image)), box, 2), ps); }, params_of(store)));
  }
  {
    ParamStore<double> store(mix_seed(seed, 3));
    Gqm<double> gqm(store, 5, 4, 6, 2);
    auto persons = random(rng, {4, 5}), global = random(rng, {4});
    for (QueryMode mode : {QueryMode::kConcat, QueryMode::kEdge}) {
      auto inputs = params_of(store);
      inputs.push_back(persons);
      inputs.push_back(global);
      results.push_back(check_gradients(mode == QueryMode::kEdge ? "gqm_edge_query" : "gqm_concat_query", [&] {
        return probe(extract_queries(gqm.run(ctx, gqm.init(ctx, persons, global)), mode), ps);
      }, inputs));
    }
  }
  {
    ParamStore<double> store(mix_seed(seed, 4));
    Trm<double> trm(store, 4, 6, 8, 2, 8, 3);
    auto features = random(rng, {4, 2, 2});
    auto queries = random(rng, {4, 6});
    PairList pairs = PairList::complete(2);
    results.push_back(check_gradients("trm_encoder", [&] { return probe(trm.encode(ctx, features), ps); },
                                      [&] {
                                        auto in = params_of(store);
                                        in.push_back(features);
                                        return in;
                                      }()));
    results.push_back(check_gradients("trm_decoder_head", [&] {
      const auto batch = pad_queries(slice(queries, 0, 0, 2), pairs, 3);
      return probe(trm.classify(ctx, trm.decode(ctx, batch, trm.encode(ctx, features)), 3, true), ps);
    }, [&] {
      auto in = params_of(store);
      in.push_back(features);
      in.push_back(queries);
      return in;
    }()));
  }
  {
    auto logits = random(rng, {3, 3, 4});
    const std::vector<LabeledPair> labels{{0, 1, 2}, {1, 2, 0}};
    const auto mask = build_mask(labels, 3, MaskMode::kBilateral);
    const std::vector<std::size_t> counts{3, 1, 5, 2};
    const auto weights = compute_class_weights(counts);
    results.push_back(
        check_gradients("weighted_bce", [&] { return weighted_bce(logits, mask, weights); }, {logits}));
  }
  {
    const ModelConfig config = tiny_config();
    Model<double> model(config, mix_seed(seed, 5));
    auto image = random(rng, {3, 16, 16}, 0.0, 1.0);
    const std::vector<PersonBox> persons{{0.0, 0.0, 0.4, 0.5}, {0.5, 0.1, 0.9, 0.6}, {0.2, 0.6, 0.7, 1.0}};
    const std::vector<LabeledPair> labels{{0, 1, 1}, {0, 2, 2}, {1, 2, 0}};
    const auto mask = build_mask(labels, 3, MaskMode::kBilateral);
    const auto weights = compute_class_weights(std::vector<std::size_t>{4, 2, 3});
    results.push_back(check_gradients("full_pipeline", [&] {
      return weighted_bce(model.forward(ctx, image, persons).scores, mask, weights);
    }, params_of(model.store())));
  }
  return results;
}

}  // namespace rgnet
