// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "rgnet/nn.hpp"

namespace rgnet {

/// Ordered off-diagonal pairs (i, j), i != j, in row-major order.
struct PairList {
  std::size_t persons = 0;
  std::vector<std::size_t> first;   // i
  std::vector<std::size_t> second;  // j

  static PairList complete(std::size_t persons);
  std::size_t size() const { return first.size(); }
};

/// Complete graph over the persons of one image.
/// h: [P x d] vertex states; e: [P(P-1) x d] edge states ordered as PairList.
template <typename T>
struct RelationGraph {
  PairList pairs;
  Tensor<T> h;
  Tensor<T> e;

  std::size_t persons() const { return pairs.persons; }
  std::size_t width() const { return h.dim(1); }
};

/// One message-passing iteration's weights, each [d x d] acting on row
/// vectors (x W). The same w_edge_h multiplies both endpoints in the edge
/// update.
template <typename T>
struct GqmLayer {
  Tensor<T> w_edge_h;
  Tensor<T> w_e;
  Tensor<T> w_vertex_h;
};

enum class QueryMode { kConcat, kEdge };

/// e_ij <- relu(h_i W + h_j W + e_ij W_e) for all ordered i != j, from the
/// pre-update vertex states.
template <typename T>
Tensor<T> edge_update(const ForwardContext<T>& ctx, const RelationGraph<T>& g, const GqmLayer<T>& layer);

/// h_i <- h_i + relu(h_i W_v + (1/(P-1)) sum_{j != i} e_ij * (h_j W_v)),
/// consuming already-updated edges. Throws DataError for fewer than two persons.
template <typename T>
Tensor<T> vertex_update(const ForwardContext<T>& ctx, const RelationGraph<T>& g, const GqmLayer<T>& layer);

/// Per-pair queries in PairList order: concat -> [M x 2d], edge -> [M x d].
template <typename T> Tensor<T> pair_queries(const RelationGraph<T>& g, QueryMode mode);

/// Queries laid out on the person grid: [P x P x q] with zero diagonal.
template <typename T> Tensor<T> extract_queries(const RelationGraph<T>& g, QueryMode mode);

template <typename T>
class Gqm {
 public:
  Gqm() = default;
  Gqm(ParamStore<T>& store, std::size_t person_features, std::size_t global_features, std::size_t width,
      std::size_t iterations);

  /// Projects person features [P x F_p] and the global feature [F_g] to the
  /// initial graph: h_i from x_i, every e_ij from x_I.
  RelationGraph<T> init(const ForwardContext<T>& ctx, const Tensor<T>& person_features,
                        const Tensor<T>& global_feature) const;
  /// Runs all iterations (edge update, then vertex update).
  RelationGraph<T> run(const ForwardContext<T>& ctx, RelationGraph<T> graph) const;

  const std::vector<GqmLayer<T>>& layers() const { return layers_; }
  std::size_t width() const { return width_; }

 private:
  Linear<T> person_proj_;
  Linear<T> global_proj_;
  std::vector<GqmLayer<T>> layers_;
  std::size_t width_ = 0;
};

extern template class Gqm<float>;
extern template class Gqm<double>;

}  // namespace rgnet
