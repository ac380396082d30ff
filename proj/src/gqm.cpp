// SPDX-License-Identifier: Apache-2.0
#include "rgnet/gqm.hpp"

#include "rgnet/error.hpp"
#include "rgnet/ops.hpp"

namespace rgnet {

PairList PairList::complete(std::size_t persons) {
  PairList list;
  list.persons = persons;
  for (std::size_t i = 0; i < persons; ++i)
    for (std::size_t j = 0; j < persons; ++j)
      if (i != j) {
        list.first.push_back(i);
        list.second.push_back(j);
      }
  return list;
}

namespace {

template <typename T>
void check_graph(const RelationGraph<T>& g, const GqmLayer<T>& layer) {
  const std::size_t d = g.h.dim(1);
  if (g.h.rank() != 2 || g.h.dim(0) != g.persons()) throw ShapeError("gqm: vertex states " + to_string(g.h.shape()));
  if (g.e.rank() != 2 || g.e.dim(0) != g.pairs.size() || g.e.dim(1) != d) {
    throw ShapeError("gqm: edge states " + to_string(g.e.shape()) + " for " + std::to_string(g.pairs.size()) + " pairs");
  }
  for (const auto* w : {&layer.w_edge_h, &layer.w_e, &layer.w_vertex_h}) {
    if (w->shape() != Shape{d, d}) throw ShapeError("gqm: weight " + to_string(w->shape()) + " for width " + std::to_string(d));
  }
}

}  // namespace

template <typename T>
Tensor<T> edge_update(const ForwardContext<T>& ctx, const RelationGraph<T>& g, const GqmLayer<T>& layer) {
  check_graph(g, layer);
  const auto projected = matmul(g.h, ctx.weight(layer.w_edge_h));
  const auto from_i = gather_rows(projected, std::span<const std::size_t>(g.pairs.first));
  const auto from_j = gather_rows(projected, std::span<const std::size_t>(g.pairs.second));
  return relu(add(add(from_i, from_j), matmul(g.e, ctx.weight(layer.w_e))));
}

template <typename T>
Tensor<T> vertex_update(const ForwardContext<T>& ctx, const RelationGraph<T>& g, const GqmLayer<T>& layer) {
  check_graph(g, layer);
  const std::size_t p = g.persons();
  if (p < 2) throw DataError("gqm: graph with " + std::to_string(p) + " person(s) has no neighbours");
  const auto projected = matmul(g.h, ctx.weight(layer.w_vertex_h));
  const auto neighbour = gather_rows(projected, std::span<const std::size_t>(g.pairs.second));
  const auto messages = mul(g.e, neighbour);
  const auto summed = scatter_add_rows(messages, std::span<const std::size_t>(g.pairs.first), p);
  const auto averaged = scale(summed, T(1) / static_cast<T>(p - 1));
  return add(g.h, relu(add(projected, averaged)));
}

template <typename T>
Tensor<T> pair_queries(const RelationGraph<T>& g, QueryMode mode) {
  if (mode == QueryMode::kEdge) return g.e;
  return concat(std::vector<Tensor<T>>{gather_rows(g.h, std::span<const std::size_t>(g.pairs.first)),
                                       gather_rows(g.h, std::span<const std::size_t>(g.pairs.second))},
                1);
}

template <typename T>
Tensor<T> extract_queries(const RelationGraph<T>& g, QueryMode mode) {
  const std::size_t p = g.persons();
  const auto q = pair_queries(g, mode);
  std::vector<std::size_t> slots(g.pairs.size());
  for (std::size_t k = 0; k < slots.size(); ++k) slots[k] = g.pairs.first[k] * p + g.pairs.second[k];
  return reshape(scatter_add_rows(q, std::span<const std::size_t>(slots), p * p), Shape{p, p, q.dim(1)});
}

template <typename T>
Gqm<T>::Gqm(ParamStore<T>& store, std::size_t person_features, std::size_t global_features, std::size_t width,
            std::size_t iterations)
    : person_proj_(store, "gqm.person_proj", person_features, width, ParamGroup::kRest),
      global_proj_(store, "gqm.global_proj", global_features, width, ParamGroup::kRest),
      width_(width) {
  for (std::size_t t = 0; t < iterations; ++t) {
    const std::string prefix = "gqm.t" + std::to_string(t) + ".";
    GqmLayer<T> layer;
    layer.w_edge_h = store.uniform(prefix + "w_edge_h", Shape{width, width}, width, ParamGroup::kRest);
    layer.w_e = store.uniform(prefix + "w_e", Shape{width, width}, width, ParamGroup::kRest);
    layer.w_vertex_h = store.uniform(prefix + "w_vertex_h", Shape{width, width}, width, ParamGroup::kRest);
    layers_.push_back(std::move(layer));
  }
}

template <typename T>
RelationGraph<T> Gqm<T>::init(const ForwardContext<T>& ctx, const Tensor<T>& person_features,
                              const Tensor<T>& global_feature) const {
  if (person_features.rank() != 2) throw ShapeError("gqm: person features must be [P x F]");
  const std::size_t p = person_features.dim(0);
  if (p < 2) throw DataError("gqm: graph with " + std::to_string(p) + " person(s) has no neighbours");
  RelationGraph<T> g;
  g.pairs = PairList::complete(p);
  g.h = person_proj_(ctx, person_features);
  const auto edge0 = global_proj_(ctx, reshape(global_feature, Shape{1, global_feature.numel()}));
  g.e = expand_rows(reshape(edge0, Shape{width_}), g.pairs.size());
  return g;
}

template <typename T>
RelationGraph<T> Gqm<T>::run(const ForwardContext<T>& ctx, RelationGraph<T> graph) const {
  for (const auto& layer : layers_) {
    graph.e = edge_update(ctx, graph, layer);
    graph.h = vertex_update(ctx, graph, layer);
  }
  return graph;
}

#define RGNET_INSTANTIATE_GQM(T)                                                                              \
  template Tensor<T> edge_update(const ForwardContext<T>&, const RelationGraph<T>&, const GqmLayer<T>&);      \
  template Tensor<T> vertex_update(const ForwardContext<T>&, const RelationGraph<T>&, const GqmLayer<T>&);    \
  template Tensor<T> pair_queries(const RelationGraph<T>&, QueryMode);                                        \
  template Tensor<T> extract_queries(const RelationGraph<T>&, QueryMode);                                     \
  template class Gqm<T>;

RGNET_INSTANTIATE_GQM(float)
RGNET_INSTANTIATE_GQM(double)

#undef RGNET_INSTANTIATE_GQM

}  // namespace rgnet
