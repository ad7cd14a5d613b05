#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dsnet/tensor.hpp"

namespace dsnet {

/// One value in the recorded computation. Leaves are parameters or inputs;
/// interior nodes hold the closure that pushes their gradient to parents.
struct Node {
  Tensor value;
  Tensor grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Allocates a zero gradient on first use and returns it.
  Tensor& grad_buffer();
};

/// Shared handle to a Node. Copying a Var aliases the same node.
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value, bool requires_grad = true);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Only meaningful for leaves; interior values are fixed once produced.
  Tensor& mutable_value() { return node_->value; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient, or a zero tensor of the value's shape if none has arrived.
  Tensor grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  friend Var make_node(Tensor, std::vector<Var>, std::function<void(Node&)>);

  std::shared_ptr<Node> node_;
};

/// Creates an interior node. Parents and the backward closure are recorded
/// only if at least one parent requires a gradient.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

/// Reverse-mode sweep from a single-element root, seeding d(root) = 1.
void backward(const Var& root);

}  // namespace dsnet
