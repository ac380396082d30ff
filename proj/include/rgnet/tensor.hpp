// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rgnet {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;

  /// Lazily allocated gradient buffer.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor handle. Copies share the underlying node, so a
/// parameter held by a layer and by the parameter store is the same object.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  /// Mutable storage; reserved for optimizers and parameter loading.
  std::span<T> mutable_data() { return node_->data; }
  T item() const;
  T operator[](std::size_t flat) const { return node_->data[flat]; }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad();

  /// Fresh leaf holding a copy of the values; never tracked.
  Tensor detach() const;

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

/// Ordered record of differentiable operations. Operations only record while a
/// tape is active on the calling thread (see TapeScope); backward replays the
/// entries in exact reverse execution order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_step);
  std::size_t size() const noexcept { return steps_.size(); }
  void clear() noexcept { steps_.clear(); }

  /// Seeds d(loss)/d(loss) = 1, runs every recorded step in reverse and
  /// releases the record. `loss` must hold exactly one element.
  template <typename T>
  void backward(const Tensor<T>& loss);

  static Tape* active() noexcept;

 private:
  friend class TapeScope;
  std::vector<std::function<void()>> steps_;
};

/// Makes `tape` the recording target for the current thread for the lifetime
/// of the scope. Nested scopes restore the previous tape on exit.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace rgnet
