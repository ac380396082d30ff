// SPDX-License-Identifier: Apache-2.0
#include "rgnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rgnet/affine_quant.hpp"
#include "rgnet/error.hpp"

namespace rgnet {
namespace {

template <typename T>
bool tracking(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Registers `fn(grad_out)` to run during backward if the output received any
// gradient.
template <typename T, typename Fn>
void record(Tensor<T>& out, Fn fn) {
  out.set_requires_grad(true);
  Tape::active()->record([on = out.node(), fn = std::move(fn)]() {
    if (on->grad.empty()) return;
    fn(on->grad);
  });
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(x.shape()));
  }
}

// Applies a pointwise map whose derivative can be expressed from (x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D df) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  Tensor<T> y(x.shape(), std::move(out));
  if (tracking<T>({&x})) {
    record(y, [xn = x.node(), yn = y.node(), df](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xn->data[i], yn->data[i]);
    });
  }
  return y;
}

// Maps each input flat index onto the flat index of the reduced output.
std::vector<std::size_t> reduction_map(const Shape& shape, const std::vector<std::size_t>& axes, Shape& out_shape) {
  std::vector<bool> reduced(shape.size(), false);
  for (std::size_t a : axes) {
    if (a >= shape.size()) throw ShapeError("reduction axis " + std::to_string(a) + " invalid for " + to_string(shape));
    reduced[a] = true;
  }
  out_shape.clear();
  for (std::size_t d = 0; d < shape.size(); ++d)
    if (!reduced[d]) out_shape.push_back(shape[d]);
  std::vector<std::size_t> out_stride(shape.size(), 0);
  std::size_t stride = 1;
  for (std::size_t d = shape.size(); d-- > 0;) {
    if (!reduced[d]) {
      out_stride[d] = stride;
      stride *= shape[d];
    }
  }
  const std::size_t n = numel(shape);
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> counter(shape.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < shape.size(); ++d) o += counter[d] * out_stride[d];
    map[i] = o;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++counter[d] < shape[d]) break;
      counter[d] = 0;
    }
  }
  return map;
}

template <typename T>
Tensor<T> reduce_axes(const Tensor<T>& x, const std::vector<std::size_t>& axes, bool average) {
  Shape out_shape;
  auto map = reduction_map(x.shape(), axes, out_shape);
  const std::size_t out_n = numel(out_shape);
  const std::size_t count = out_n == 0 ? 0 : x.numel() / out_n;
  std::vector<T> out(out_n, T(0));
  const auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) out[map[i]] += in[i];
  if (average && count > 0) {
    for (T& v : out) v /= static_cast<T>(count);
  }
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (tracking<T>({&x})) {
    const T factor = average && count > 0 ? T(1) / static_cast<T>(count) : T(1);
    record(y, [xn = x.node(), map = std::move(map), factor](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[map[i]] * factor;
    });
  }
  return y;
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  s.extent = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  Tensor<T> c(a.shape(), std::move(out));
  if (tracking<T>({&a, &b})) {
    record(c, [an = a.node(), bn = b.node()](const std::vector<T>& g) {
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        auto& gn = n->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gn[i] += g[i];
      }
    });
  }
  return c;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  Tensor<T> c(a.shape(), std::move(out));
  if (tracking<T>({&a, &b})) {
    record(c, [an = a.node(), bn = b.node()](const std::vector<T>& g) {
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return c;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data(), y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  Tensor<T> c(a.shape(), std::move(out));
  if (tracking<T>({&a, &b})) {
    record(c, [an = a.node(), bn = b.node()](const std::vector<T>& g) {
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->data[i];
      }
    });
  }
  return c;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary(x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(x, [factor](T v) { return factor * v; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  const T eps = static_cast<T>(kLogEpsilon);
  return unary(
      x, [eps](T v) { return std::log(std::max(v, eps)); },
      [eps](T v, T) { return v >= eps ? T(1) / v : T(0); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  const T* A = a.data().data();
  const T* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = A[i * k + p];
      const T* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  Tensor<T> c(Shape{m, n}, std::move(out));
  if (tracking<T>({&a, &b})) {
    record(c, [an = a.node(), bn = b.node(), m, k, n](const std::vector<T>& g) {
      const T* G = g.data();
      if (an->requires_grad) {
        auto& ga = an->grad_buffer();
        const T* Bd = bn->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            T acc = T(0);
            for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * Bd[p * n + j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        const T* Ad = an->data.data();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const T aip = Ad[i * k + p];
            T* grow = gb.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) grow[j] += aip * G[i * n + j];
          }
        }
      }
    });
  }
  return c;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  return reduce_axes(x, axes, false);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  return reduce_axes(x, axes, true);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  return reduce_axes(x, axes, false);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  return reduce_axes(x, axes, true);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  Tensor<T> y(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (tracking<T>({&x})) {
    record(y, [xn = x.node()](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("transpose: needs rank >= 2, got " + to_string(x.shape()));
  Shape shape = x.shape();
  const std::size_t r = shape[shape.size() - 2], c = shape[shape.size() - 1];
  const std::size_t batch = x.numel() / std::max<std::size_t>(r * c, 1);
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = in[b * r * c + i * c + j];
  Tensor<T> y(std::move(shape), std::move(out));
  if (tracking<T>({&x})) {
    record(y, [xn = x.node(), batch, r, c](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gx[b * r * c + i * c + j] += g[b * r * c + j * r + i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " invalid for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != first.size()) throw ShapeError("concat: rank mismatch " + to_string(first) + " vs " + to_string(probe));
    for (std::size_t d = 0; d < probe.size(); ++d) {
      if (d != axis && probe[d] != first[d]) {
        throw ShapeError("concat: shape mismatch " + to_string(first) + " vs " + to_string(probe));
      }
    }
    out_shape[axis] += probe[axis];
  }
  const AxisSplit outer = split_at(out_shape, axis);
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t ext = p.shape()[axis];
    const auto in = p.data();
    for (std::size_t o = 0; o < outer.outer; ++o) {
      std::copy_n(in.begin() + o * ext * outer.inner, ext * outer.inner,
                  out.begin() + (o * outer.extent + offset) * outer.inner);
    }
    offset += ext;
  }
  Tensor<T> y(std::move(out_shape), std::move(out));
  bool any = false;
  if (Tape::active() != nullptr) {
    for (const auto& p : parts) any = any || p.requires_grad();
  }
  if (any) {
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    record(y, [nodes = std::move(nodes), offsets = std::move(offsets), outer, axis](const std::vector<T>& g) {
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        auto& n = *nodes[k];
        if (!n.requires_grad) continue;
        const std::size_t ext = n.shape[axis];
        auto& gn = n.grad_buffer();
        for (std::size_t o = 0; o < outer.outer; ++o)
          for (std::size_t e = 0; e < ext * outer.inner; ++e)
            gn[o * ext * outer.inner + e] += g[(o * outer.extent + offsets[k]) * outer.inner + e];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank()) throw ShapeError("slice: axis " + std::to_string(axis) + " invalid for " + to_string(x.shape()));
  if (start + length > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds extent of " + to_string(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<T> out(numel(out_shape));
  const auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(in.begin() + (o * s.extent + start) * s.inner, length * s.inner, out.begin() + o * length * s.inner);
  Tensor<T> y(std::move(out_shape), std::move(out));
  if (tracking<T>({&x})) {
    record(y, [xn = x.node(), s, start, length](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < length * s.inner; ++e)
          gx[(o * s.extent + start) * s.inner + e] += g[o * length * s.inner + e];
    });
  }
  return y;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::span<const std::uint8_t> key_mask) {
  if (x.rank() < 1) throw ShapeError("softmax: needs rank >= 1");
  const std::size_t m = x.shape().back();
  if (!key_mask.empty() && key_mask.size() != m) {
    throw ShapeError("softmax: mask of length " + std::to_string(key_mask.size()) + " for rows of " + std::to_string(m));
  }
  const std::size_t rows = m == 0 ? 0 : x.numel() / m;
  std::vector<T> out(x.numel(), T(0));
  const auto in = x.data();
  auto keep = [&](std::size_t j) { return key_mask.empty() || key_mask[j] != 0; };
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = in.data() + r * m;
    T* dst = out.data() + r * m;
    bool found = false;
    T peak = T(0);
    for (std::size_t j = 0; j < m; ++j) {
      if (!keep(j)) continue;
      if (!found || row[j] > peak) peak = row[j];
      found = true;
    }
    if (!found) continue;
    T total = T(0);
    for (std::size_t j = 0; j < m; ++j) {
      if (!keep(j)) continue;
      dst[j] = std::exp(row[j] - peak);
      total += dst[j];
    }
    for (std::size_t j = 0; j < m; ++j) dst[j] /= total;
  }
  Tensor<T> y(x.shape(), std::move(out));
  if (tracking<T>({&x})) {
    record(y, [xn = x.node(), yn = y.node(), rows, m](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      const auto& p = yn->data;
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = T(0);
        for (std::size_t j = 0; j < m; ++j) dot += p[r * m + j] * g[r * m + j];
        for (std::size_t j = 0; j < m; ++j) gx[r * m + j] += p[r * m + j] * (g[r * m + j] - dot);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> expand_rows(const Tensor<T>& x, std::size_t rows) {
  require_rank(x, 1, "expand_rows");
  const std::size_t m = x.dim(0);
  std::vector<T> out(rows * m);
  for (std::size_t r = 0; r < rows; ++r) std::copy(x.data().begin(), x.data().end(), out.begin() + r * m);
  Tensor<T> y(Shape{rows, m}, std::move(out));
  if (tracking<T>({&x})) {
    record(y, [xn = x.node(), rows, m](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j) gx[j] += g[r * m + j];
    });
  }
  return y;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> index) {
  require_rank(x, 2, "gather_rows");
  const std::size_t n = x.dim(0), m = x.dim(1);
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<T> out(idx.size() * m);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " out of " + std::to_string(n) + " rows");
    std::copy_n(x.data().begin() + idx[r] * m, m, out.begin() + r * m);
  }
  Tensor<T> y(Shape{idx.size(), m}, std::move(out));
  if (tracking<T>({&x})) {
    record(y, [xn = x.node(), idx = std::move(idx), m](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < m; ++j) gx[idx[r] * m + j] += g[r * m + j];
    });
  }
  return y;
}

template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& x, std::span<const std::size_t> index, std::size_t rows) {
  require_rank(x, 2, "scatter_add_rows");
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (index.size() != n) {
    throw ShapeError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " + std::to_string(n) + " rows");
  }
  std::vector<std::vector<std::size_t>> sources(rows);
  for (std::size_t r = 0; r < n; ++r) {
    if (index[r] >= rows) throw ShapeError("scatter_add_rows: target row " + std::to_string(index[r]) + " out of range");
    sources[index[r]].push_back(r);
  }
  std::vector<T> out(rows * m, T(0));
  const auto in = x.data();
  std::vector<T> terms;
  for (std::size_t dst = 0; dst < rows; ++dst) {
    const auto& src = sources[dst];
    if (src.empty()) continue;
    for (std::size_t j = 0; j < m; ++j) {
      terms.clear();
      for (std::size_t s : src) terms.push_back(in[s * m + j]);
      std::sort(terms.begin(), terms.end());
      T acc = T(0);
      for (T v : terms) acc += v;
      out[dst * m + j] = acc;
    }
  }
  Tensor<T> y(Shape{rows, m}, std::move(out));
  if (tracking<T>({&x})) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    record(y, [xn = x.node(), idx = std::move(idx), m](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < m; ++j) gx[r * m + j] += g[idx[r] * m + j];
    });
  }
  return y;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " incompatible with weight " + to_string(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " for " + std::to_string(cout) + " output channels");
  }
  if (stride == 0 || h + 2 * padding < kh || w + 2 * padding < kw) throw ShapeError("conv2d: invalid geometry");
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
  std::vector<T> out(cout * oh * ow, T(0));
  const T* X = x.data().data();
  const T* W = weight.data().data();
  // Visits (co, oy, ox, ci, ky, kx) and reports the input offset, skipping padding.
  auto for_each_tap = [=](auto&& fn) {
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                fn((co * oh + oy) * ow + ox, (ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix),
                   ((co * cin + ci) * kh + ky) * kw + kx);
              }
            }
  };
  for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) { out[o] += W[k] * X[i]; });
  if (bias.defined()) {
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t p = 0; p < oh * ow; ++p) out[co * oh * ow + p] += bias[co];
  }
  Tensor<T> y(Shape{cout, oh, ow}, std::move(out));
  if (tracking<T>({&x, &weight, &bias})) {
    auto bn = bias.defined() ? bias.node() : nullptr;
    record(y, [xn = x.node(), wn = weight.node(), bn, for_each_tap, cout, plane = oh * ow](const std::vector<T>& g) {
      if (xn->requires_grad) {
        auto& gx = xn->grad_buffer();
        const auto& wd = wn->data;
        for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) { gx[i] += g[o] * wd[k]; });
      }
      if (wn->requires_grad) {
        auto& gw = wn->grad_buffer();
        const auto& xd = xn->data;
        for_each_tap([&](std::size_t o, std::size_t i, std::size_t k) { gw[k] += g[o] * xd[i]; });
      }
      if (bn && bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t p = 0; p < plane; ++p) gb[co] += g[co * plane + p];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t window) {
  require_rank(x, 3, "avg_pool2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw ShapeError("avg_pool2d: window " + std::to_string(window) + " does not tile " + to_string(x.shape()));
  }
  const std::size_t oh = h / window, ow = w / window;
  const T area = static_cast<T>(window * window);
  std::vector<T> out(c * oh * ow, T(0));
  const auto in = x.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = T(0);
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) acc += in[(ch * h + oy * window + dy) * w + ox * window + dx];
        out[(ch * oh + oy) * ow + ox] = acc / area;
      }
  Tensor<T> y(Shape{c, oh, ow}, std::move(out));
  if (tracking<T>({&x})) {
    record(y, [xn = x.node(), c, h, w, oh, ow, window, area](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const T share = g[(ch * oh + oy) * ow + ox] / area;
            for (std::size_t dy = 0; dy < window; ++dy)
              for (std::size_t dx = 0; dx < window; ++dx) gx[(ch * h + oy * window + dy) * w + ox * window + dx] += share;
          }
    });
  }
  return y;
}

template <typename T>
Tensor<T> roi_pool(const Tensor<T>& x, const CellRegion& region, std::size_t grid) {
  require_rank(x, 3, "roi_pool");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (grid == 0) throw ShapeError("roi_pool: grid must be >= 1");
  if (region.y0 >= region.y1 || region.x0 >= region.x1 || region.y1 > h || region.x1 > w) {
    throw ShapeError("roi_pool: empty or out-of-range region for map " + to_string(x.shape()));
  }
  const std::size_t ly = region.y1 - region.y0, lx = region.x1 - region.x0;
  auto bin_lo = [grid](std::size_t b, std::size_t len) { return (b * len) / grid; };
  auto bin_hi = [grid](std::size_t b, std::size_t len) { return ((b + 1) * len + grid - 1) / grid; };
  std::vector<T> out(c * grid * grid, T(0));
  const auto in = x.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t by = 0; by < grid; ++by)
      for (std::size_t bx = 0; bx < grid; ++bx) {
        const std::size_t y0 = region.y0 + bin_lo(by, ly), y1 = region.y0 + bin_hi(by, ly);
        const std::size_t x0 = region.x0 + bin_lo(bx, lx), x1 = region.x0 + bin_hi(bx, lx);
        T acc = T(0);
        for (std::size_t yy = y0; yy < y1; ++yy)
          for (std::size_t xx = x0; xx < x1; ++xx) acc += in[(ch * h + yy) * w + xx];
        out[(ch * grid + by) * grid + bx] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
  Tensor<T> y(Shape{c * grid * grid}, std::move(out));
  if (tracking<T>({&x})) {
    record(y, [xn = x.node(), region, grid, c, h, w, ly, lx, bin_lo, bin_hi](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t by = 0; by < grid; ++by)
          for (std::size_t bx = 0; bx < grid; ++bx) {
            const std::size_t y0 = region.y0 + bin_lo(by, ly), y1 = region.y0 + bin_hi(by, ly);
            const std::size_t x0 = region.x0 + bin_lo(bx, lx), x1 = region.x0 + bin_hi(bx, lx);
            const T share = g[(ch * grid + by) * grid + bx] / static_cast<T>((y1 - y0) * (x1 - x0));
            for (std::size_t yy = y0; yy < y1; ++yy)
              for (std::size_t xx = x0; xx < x1; ++xx) gx[(ch * h + yy) * w + xx] += share;
          }
    });
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t n = x.dim(0), m = x.dim(1);
  if (gain.shape() != Shape{m} || bias.shape() != Shape{m}) {
    throw ShapeError("layer_norm: affine parameters must be [" + std::to_string(m) + "]");
  }
  std::vector<T> normed(n * m), inv_std(n), out(n * m);
  const auto in = x.data();
  for (std::size_t r = 0; r < n; ++r) {
    T mu = T(0);
    for (std::size_t j = 0; j < m; ++j) mu += in[r * m + j];
    mu /= static_cast<T>(m);
    T var = T(0);
    for (std::size_t j = 0; j < m; ++j) {
      const T d = in[r * m + j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(m);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      normed[r * m + j] = (in[r * m + j] - mu) * inv_std[r];
      out[r * m + j] = normed[r * m + j] * gain[j] + bias[j];
    }
  }
  Tensor<T> y(Shape{n, m}, std::move(out));
  if (tracking<T>({&x, &gain, &bias})) {
    record(y, [xn = x.node(), gn = gain.node(), bn = bias.node(), normed = std::move(normed),
               inv_std = std::move(inv_std), n, m](const std::vector<T>& g) {
      if (gn->requires_grad) {
        auto& gg = gn->grad_buffer();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < m; ++j) gg[j] += g[r * m + j] * normed[r * m + j];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < m; ++j) gb[j] += g[r * m + j];
      }
      if (xn->requires_grad) {
        auto& gx = xn->grad_buffer();
        const T mt = static_cast<T>(m);
        for (std::size_t r = 0; r < n; ++r) {
          T sum_d = T(0), sum_dn = T(0);
          for (std::size_t j = 0; j < m; ++j) {
            const T d = g[r * m + j] * gn->data[j];
            sum_d += d;
            sum_dn += d * normed[r * m + j];
          }
          for (std::size_t j = 0; j < m; ++j) {
            const T d = g[r * m + j] * gn->data[j];
            gx[r * m + j] += inv_std[r] / mt * (mt * d - sum_d - normed[r * m + j] * sum_dn);
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> fake_quant(const Tensor<T>& x, double scale, std::int32_t zero_point) {
  if (!(scale > 0.0)) throw NumericError("fake_quant: scale must be positive");
  const auto in = x.data();
  std::vector<T> out(in.size());
  std::vector<std::uint8_t> pass(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double level = unclamped_level(static_cast<double>(in[i]), scale, zero_point);
    pass[i] = level >= kQuantMin && level <= kQuantMax;
    out[i] = static_cast<T>(dequantize_value(quantize_value(static_cast<double>(in[i]), scale, zero_point), scale,
                                             zero_point));
  }
  Tensor<T> y(x.shape(), std::move(out));
  if (tracking<T>({&x})) {
    record(y, [xn = x.node(), pass = std::move(pass)](const std::vector<T>& g) {
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (pass[i]) gx[i] += g[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> symmetrize_pairs(const Tensor<T>& m) {
  require_rank(m, 3, "symmetrize_pairs");
  const std::size_t p = m.dim(0), c = m.dim(2);
  if (m.dim(1) != p) throw ShapeError("symmetrize_pairs: person axes differ in " + to_string(m.shape()));
  const auto in = m.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i; j < p; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        const T s = in[(i * p + j) * c + k] + in[(j * p + i) * c + k];
        out[(i * p + j) * c + k] = s;
        out[(j * p + i) * c + k] = s;
      }
  Tensor<T> y(m.shape(), std::move(out));
  if (tracking<T>({&m})) {
    record(y, [mn = m.node(), p, c](const std::vector<T>& g) {
      auto& gm = mn->grad_buffer();
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j)
          for (std::size_t k = 0; k < c; ++k) gm[(i * p + j) * c + k] += g[(i * p + j) * c + k] + g[(j * p + i) * c + k];
    });
  }
  return y;
}

#define RGNET_INSTANTIATE_OPS(T)                                                                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> neg(const Tensor<T>&);                                                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                                             \
  template Tensor<T> relu(const Tensor<T>&);                                                                 \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                              \
  template Tensor<T> log(const Tensor<T>&);                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                                 \
  template Tensor<T> sum(const Tensor<T>&, const std::vector<std::size_t>&);                                 \
  template Tensor<T> mean(const Tensor<T>&, const std::vector<std::size_t>&);                                \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                       \
  template Tensor<T> transpose(const Tensor<T>&);                                                            \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                                     \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                         \
  template Tensor<T> softmax(const Tensor<T>&, std::span<const std::uint8_t>);                               \
  template Tensor<T> expand_rows(const Tensor<T>&, std::size_t);                                             \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);                            \
  template Tensor<T> scatter_add_rows(const Tensor<T>&, std::span<const std::size_t>, std::size_t);          \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> avg_pool2d(const Tensor<T>&, std::size_t);                                              \
  template Tensor<T> roi_pool(const Tensor<T>&, const CellRegion&, std::size_t);                             \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                    \
  template Tensor<T> fake_quant(const Tensor<T>&, double, std::int32_t);                                     \
  template Tensor<T> symmetrize_pairs(const Tensor<T>&);

RGNET_INSTANTIATE_OPS(float)
RGNET_INSTANTIATE_OPS(double)

#undef RGNET_INSTANTIATE_OPS

}  // namespace rgnet
