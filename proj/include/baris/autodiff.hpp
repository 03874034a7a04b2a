#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "baris/tensor.hpp"

namespace baris {

// Reverse-mode tape. Nodes are recorded in application order; backward walks
// them exactly once in reverse. One tape per training step, never shared
// between threads.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

  template <typename VarT>
  void backward(const VarT& loss) {
    if (consumed_) throw std::runtime_error("backward called twice on the same tape");
    if (loss.value->numel() != 1)
      throw std::invalid_argument("backward requires a scalar loss, got " +
                                  shape_str(loss.value->shape));
    if (!loss.grad) throw std::runtime_error("loss is detached from the tape");
    (*loss.grad)[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    consumed_ = true;
  }

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

// A tensor registered for differentiation. Leaves with requires_grad own a
// gradient buffer from construction; frozen leaves never get one, so gradient
// absence doubles as the "frozen" marker.
template <typename T>
struct Var {
  std::shared_ptr<Tensor<T>> value;
  std::shared_ptr<Tensor<T>> grad;  // null for frozen leaves and constants
  bool requires_grad = false;
  bool on_tape = false;  // interior node: gradient flows through

  Var() = default;

  const Tensor<T>& val() const { return *value; }
  Tensor<T>& val() { return *value; }

  bool tracked() const { return requires_grad || on_tape; }

  void zero_grad() {
    if (grad) std::fill(grad->data.begin(), grad->data.end(), T(0));
  }
};

template <typename T>
Var<T> make_param(Tensor<T> value, bool requires_grad = true) {
  Var<T> v;
  v.value = std::make_shared<Tensor<T>>(std::move(value));
  v.requires_grad = requires_grad;
  if (requires_grad) v.grad = std::make_shared<Tensor<T>>(Tensor<T>::zeros(v.value->shape));
  return v;
}

template <typename T>
Var<T> make_constant(Tensor<T> value) {
  return make_param(std::move(value), false);
}

namespace detail {

template <typename T>
Var<T> make_output(Tensor<T> value, bool tracked) {
  Var<T> v;
  v.value = std::make_shared<Tensor<T>>(std::move(value));
  v.on_tape = tracked;
  if (tracked) v.grad = std::make_shared<Tensor<T>>(Tensor<T>::zeros(v.value->shape));
  return v;
}

template <typename T>
void accumulate(const Var<T>& v, const Tensor<T>& delta) {
  if (!v.tracked()) return;
  for (int64_t i = 0; i < delta.numel(); ++i) (*v.grad)[i] += delta[i];
}

}  // namespace detail

}  // namespace baris
