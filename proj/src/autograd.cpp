#include "epe/autograd.hpp"

#include <unordered_set>
#include <utility>

#include "epe/error.hpp"

namespace epe {

namespace {

template <typename T>
std::vector<Node<T>*> topological_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  // Iterative post-order DFS; graphs from deep encoders are too deep for recursion comfort.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss) throw ValueError("backward called on a null node");
  if (loss->value.numel() != 1) {
    throw ShapeError("backward requires a single-element loss, got " + shape_to_string(loss->value.shape()));
  }
  if (!loss->requires_grad) return;

  const auto order = topological_order(loss.get());

  // This sweep computes into fresh buffers; earlier gradients are added back at the end.
  std::vector<Tensor<T>> previous(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) previous[i] = std::exchange(order[i]->grad, Tensor<T>());

  loss->grad_buffer().fill(T{1});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_rule && node->has_grad()) node->backward_rule(*node);
  }

  for (std::size_t i = 0; i < order.size(); ++i) {
    if (previous[i].empty()) continue;
    if (order[i]->has_grad()) {
      order[i]->grad += previous[i];
    } else {
      order[i]->grad = std::move(previous[i]);
    }
  }
}

template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace epe
