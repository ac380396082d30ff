// SPDX-License-Identifier: Apache-2.0
#include "rgnet/tensor.hpp"

#include <sstream>

#include "rgnet/error.hpp"

namespace rgnet {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : node_(std::make_shared<TensorNode<T>>()) {
  if (rgnet::numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + to_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  const std::size_t n = rgnet::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data);
}

template class Tensor<float>;
template class Tensor<double>;

namespace {
thread_local Tape* g_active_tape = nullptr;
}

void Tape::record(std::function<void()> backward_step) { steps_.push_back(std::move(backward_step)); }

Tape* Tape::active() noexcept { return g_active_tape; }

template <typename T>
void Tape::backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) throw ShapeError("backward() needs a single-element loss, got " + to_string(loss.shape()));
  if (!loss.requires_grad()) {
    steps_.clear();
    return;
  }
  loss.node()->grad_buffer()[0] += T(1);
  // Steps may not record new steps; detach the list first so a throwing step
  // still leaves the tape empty.
  auto steps = std::move(steps_);
  steps_.clear();
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) (*it)();
}

template void Tape::backward<float>(const Tensor<float>&);
template void Tape::backward<double>(const Tensor<double>&);

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

}  // namespace rgnet
