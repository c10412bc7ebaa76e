#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "floragan/tensor.hpp"

namespace floragan {

// Reverse-mode tape. Every op result is a Node that remembers its parents and a
// closure that pushes its gradient into them. Leaves with requires_grad keep
// accumulating gradients across backward calls until zero_grad().
template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Matrix<Scalar> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  void accumulate(const Matrix<Scalar>& g) {
    if (!requires_grad) return;
    if (grad.size() == 0)
      grad = g;
    else
      grad += g;
  }
  Node& parent(std::size_t i) { return *parents[i]; }
};

namespace autograd {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph construction for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace autograd

template <typename Scalar>
class Var {
 public:
  using NodeType = Node<Scalar>;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false) : node_(std::make_shared<NodeType>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const Matrix<Scalar>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Scalar item() const { return node_->value.matrix()(0, 0); }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<NodeType>& node() const { return node_; }

 private:
  std::shared_ptr<NodeType> node_;
};

namespace autograd {

// Builds the result node of an op. With grad mode off, or when no parent needs
// a gradient, the result is a plain constant and the closure is dropped.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> parents,
                        std::function<void(Node<Scalar>&)> backward_fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_mode())
    for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<Scalar>(std::move(node));
}

/// Back-propagates from `root` (seeded with ones, so a scalar loss gets d/d = 1).
/// Intermediate nodes release their closures afterwards; leaves keep their gradients.
template <typename Scalar>
void backward(const Var<Scalar>& root) {
  if (!root.requires_grad()) return;
  using NodePtr = Node<Scalar>*;
  // `order` owns its nodes: clearing parents below would otherwise free nodes still queued.
  std::vector<std::shared_ptr<Node<Scalar>>> order;
  std::unordered_set<NodePtr> visited;
  std::vector<std::pair<std::shared_ptr<Node<Scalar>>, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      std::shared_ptr<Node<Scalar>> child = top.first->parents[top.second++];
      if (child->requires_grad && !child->is_leaf() && visited.insert(child.get()).second)
        stack.emplace_back(std::move(child), 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }
  auto& seed = root.node()->grad;
  const auto& v = root.value().matrix();
  if (seed.size() == 0) seed = Matrix<Scalar>::Ones(v.rows(), v.cols());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodePtr node = it->get();
    if (node->grad.size() != 0) node->backward_fn(*node);
    node->backward_fn = nullptr;
    node->parents.clear();
    if (node != root.node().get()) node->grad.resize(0, 0);
  }
}

}  // namespace autograd
}  // namespace floragan
