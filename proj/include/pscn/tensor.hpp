#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pscn/errors.hpp"

namespace pscn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

// One recorded value in the compute graph. Leaves have no parents; every
// other node owns its parents and knows how to push its gradient into them.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty means "no gradient yet"
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor;

// Topologically ordered view of every node reachable from a root.
class ComputeGraph {
 public:
  static ComputeGraph reachable_from(const Tensor& root);

  // Inputs precede the nodes that consume them; the root is last.
  const std::vector<detail::Node*>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<detail::Node*> nodes_;
};

/// Dense row-major float64 array with optional reverse-mode gradient tracking.
///
/// A Tensor is a cheap handle: copies share the same storage and graph node,
/// the way parameters are shared between a model and its optimizer.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (numel_of(shape) != values.size()) {
      throw DimensionError("tensor of shape " + shape_str(shape) + " needs " +
                           std::to_string(numel_of(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double fill, bool requires_grad = false) {
    const std::size_t n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<double>(n, fill), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<double>{v}, requires_grad);
  }

  // Builds an op result. Parents are only recorded when gradients can flow.
  static Tensor from_op(Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs, const char* op,
                        std::function<void(detail::Node&)> backward_fn) {
    Tensor out(std::move(shape), std::move(values));
    bool track = false;
    for (const auto& t : inputs) track = track || t.requires_grad();
    if (track) {
      out.node_->requires_grad = true;
      for (auto& t : inputs) out.node_->parents.push_back(t.node_);
      out.node_->backward_fn = std::move(backward_fn);
    }
    out.node_->op = op;
    return out;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }
  const char* op_name() const { return node_->op; }
  const void* id() const { return node_.get(); }

  // Views into node storage; deleted on temporaries, which may own the node.
  std::span<const double> data() const& { return node_->value; }
  std::span<const double> data() const&& = delete;
  // Direct write access, intended for leaves (parameter updates, finite differences).
  std::span<double> mutable_data() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }

  double item() const {
    if (numel() != 1) {
      throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
    node_->requires_grad = on;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const& { return node_->grad; }
  std::span<const double> grad() const&& = delete;
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  void clear_grad() { node_->grad.clear(); }

  // Copy of the values with no history.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  /// Populates grad() of every requires_grad tensor reachable from this
  /// scalar. Leaf gradients accumulate across calls until cleared.
  void backward() const {
    if (!node_ || numel() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " +
                          (node_ ? shape_str(shape()) : std::string("<undefined>")));
    }
    if (!node_->requires_grad) return;
    const ComputeGraph graph = ComputeGraph::reachable_from(*this);
    for (detail::Node* n : graph.nodes()) {
      if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    const auto& order = graph.nodes();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward_fn) n->backward_fn(*n);
    }
  }

  detail::Node& node() const { return *node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

inline ComputeGraph ComputeGraph::reachable_from(const Tensor& root) {
  ComputeGraph graph;
  std::unordered_set<const detail::Node*> visited;
  // Iterative post-order DFS so deep graphs do not exhaust the stack.
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root.node(), 0);
  visited.insert(&root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      graph.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return graph;
}

}  // namespace pscn
