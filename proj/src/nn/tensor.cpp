#include "dlss/nn/tensor.hpp"

#include <unordered_set>

#include "dlss/error.hpp"

namespace dlss::nn {

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," + std::to_string(c) + ")";
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value.assign(shape.numel(), value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (values.size() != shape.numel()) throw InvalidInput("tensor: value count does not match shape " + shape.str());
  auto node = std::make_shared<Node<T>>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw InvalidInput("tensor: item() on a tensor of shape " + shape().str());
  return node_->value[0];
}

template <class T>
void backward(const Tensor<T>& out, std::span<const T> seed) {
  if (!out.defined()) throw StateError("backward: undefined tensor");
  Node<T>* root = out.node();
  // Also reached on a second sweep: swept intermediates drop requires_grad.
  if (!root->requires_grad) throw StateError("backward: no recorded forward pass reaches a trainable tensor");
  if (seed.size() != root->value.size()) throw InvalidInput("backward: seed size does not match output");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  for (std::size_t i = 0; i < seed.size(); ++i) root->grad[i] += seed[i];
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward) {
      node->ensure_grad();
      node->backward(*node);
    }
  }
  for (Node<T>* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->parents.clear();
      node->requires_grad = false;  // swept intermediates are no longer differentiable
    }
  }
}

template <class T>
void backward(const Tensor<T>& scalar_out, T scale) {
  if (!scalar_out.defined()) throw StateError("backward: undefined tensor");
  if (scalar_out.numel() != 1) throw InvalidInput("backward: scalar form needs a one-element output");
  const T seed[1] = {scale};
  backward<T>(scalar_out, std::span<const T>(seed, 1));
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&, std::span<const float>);
template void backward<double>(const Tensor<double>&, std::span<const double>);
template void backward<float>(const Tensor<float>&, float);
template void backward<double>(const Tensor<double>&, double);

}  // namespace dlss::nn
