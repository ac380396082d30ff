// SPDX-License-Identifier: Apache-2.0
#include "rgnet/model.hpp"

#include <map>

#include "rgnet/error.hpp"
#include "rgnet/ops.hpp"

namespace rgnet {

namespace {

std::size_t query_width(const ModelConfig& c) {
  return c.toggles.edge_query ? c.dims.hidden : 2 * c.dims.hidden;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config), store_(seed) {
  config_.validate();
  const Dims& d = config_.dims;
  stem_ = Stem<T>(store_, d.stem_width, d.feature_channels);
  if (config_.toggles.se_block) se_ = SEGate<T>(store_, d.feature_channels, d.se_reduction);
  gqm_ = Gqm<T>(store_, d.feature_channels * d.roi_grid * d.roi_grid, d.feature_channels, d.hidden, d.gqm_iterations);
  trm_ = Trm<T>(store_, d.feature_channels, query_width(config_), d.model_width, d.heads, d.ffn_width, d.classes);
}

template <typename T>
ModelOutput<T> Model<T>::forward(const ForwardContext<T>& ctx, const Tensor<T>& image,
                                 std::span<const PersonBox> persons) const {
  const Dims& d = config_.dims;
  if (persons.size() < 2) throw DataError("image has " + std::to_string(persons.size()) + " person(s); need at least 2");
  if (persons.size() > d.max_persons) {
    throw DataError("image has " + std::to_string(persons.size()) + " persons, more than max_persons " +
                    std::to_string(d.max_persons));
  }
  if (image.rank() != 3 || image.dim(1) != d.image_size || image.dim(2) != d.image_size) {
    throw ShapeError("model: image " + to_string(image.shape()) + " does not match image_size " +
                     std::to_string(d.image_size));
  }

  auto f = stem_(ctx, image);
  if (config_.toggles.se_block) f = se_(ctx, f);
  f = ctx.activation(f, "features");

  const auto global = gap(f);
  std::vector<Tensor<T>> rows;
  rows.reserve(persons.size());
  const std::size_t pooled = d.feature_channels * d.roi_grid * d.roi_grid;
  for (const PersonBox& box : persons) rows.push_back(reshape(roi_pool(f, box, d.roi_grid), Shape{1, pooled}));
  const auto person_features = concat(rows, 0);

  const auto graph = gqm_.run(ctx, gqm_.init(ctx, person_features, global));
  const QueryMode mode = config_.toggles.edge_query ? QueryMode::kEdge : QueryMode::kConcat;
  auto batch = pad_queries(pair_queries(graph, mode), graph.pairs, d.max_persons);
  batch.queries = ctx.activation(batch.queries, "queries");

  const auto memory = ctx.activation(trm_.encode(ctx, f), "memory");
  const auto decoded = ctx.activation(trm_.decode(ctx, batch, memory), "decoded");

  ModelOutput<T> out;
  out.scores = trm_.classify(ctx, decoded, d.max_persons, config_.toggles.logit_transform);
  out.valid = std::move(batch.mask);
  out.persons = persons.size();
  return out;
}

template <typename T>
void Model<T>::load_values(const std::vector<std::pair<std::string, std::vector<double>>>& values) {
  std::map<std::string, const std::vector<double>*> by_name;
  for (const auto& [name, v] : values) by_name[name] = &v;
  for (auto& p : store_.params()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("missing parameter '" + p.name + "'");
    if (it->second->size() != p.value.numel()) {
      throw DataError("parameter '" + p.name + "' has " + std::to_string(it->second->size()) + " values, expected " +
                      std::to_string(p.value.numel()));
    }
    auto dst = p.value.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>((*it->second)[k]);
  }
}

template class Model<float>;
template class Model<double>;

}  // namespace rgnet
