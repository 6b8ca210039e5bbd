#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "epe/tensor.hpp"

namespace epe {

template <typename T>
struct Node;

/// Handle to a node in the computation graph. Nodes are shared between the
/// graph and whoever holds the result (layers hold their parameters this way).
template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
struct Node {
  Tensor<T> value;
  /// Allocated on first accumulation; use grad_buffer() to write.
  Tensor<T> grad;
  std::vector<Var<T>> parents;
  /// Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_rule;
  bool requires_grad = false;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const noexcept { return !grad.empty(); }
  void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

/// Creates an interior node. When no parent needs a gradient the parents and the
/// rule are dropped so constant subgraphs are not retained.
template <typename T>
Var<T> make_node(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> rule) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  for (const auto& p : parents) node->requires_grad = node->requires_grad || p->requires_grad;
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_rule = std::move(rule);
  }
  return node;
}

/// Reverse-mode sweep from a single-element loss. Gradients of every reachable
/// node are added to whatever the node already held, so two sweeps without a
/// reset double them.
template <typename T>
void backward(const Var<T>& loss);

extern template void backward(const Var<float>&);
extern template void backward(const Var<double>&);

}  // namespace epe
