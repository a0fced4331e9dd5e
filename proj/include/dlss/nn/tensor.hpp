#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dlss::nn {

/// NHWC extents. Dense feature vectors use h = w = 1. Convolution weights
/// reuse the four slots as (kernel_h, kernel_w, in_channels, out_channels).
struct Shape {
  int n = 1;
  int h = 1;
  int w = 1;
  int c = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w) *
           static_cast<std::size_t>(c);
  }
  std::size_t per_sample() const { return static_cast<std::size_t>(h) * w * c; }
  std::string str() const;
  bool operator==(const Shape&) const = default;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

/// Shared handle to a node of the recorded computation.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::span<T> value() { return node_->value; }
  std::span<const T> value() const { return node_->value; }
  // Empty until a backward pass reaches this tensor.
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool r) { node_->requires_grad = r; }
  T item() const;
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Reverse-mode sweep from `out`, seeding its gradient with `seed`
// (same size as out). Releases the recorded graph afterwards, so a second
// call on the same output throws StateError.
template <class T>
void backward(const Tensor<T>& out, std::span<const T> seed);

// Scalar form; `scale` seeds d(out)/d(out).
template <class T>
void backward(const Tensor<T>& scalar_out, T scale = T(1));

// While alive on the current thread, ops record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace dlss::nn
