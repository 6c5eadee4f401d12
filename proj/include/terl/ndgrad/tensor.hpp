#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

namespace terl::ndgrad {

/// Raised when a caller breaks an operation's shape or value contract.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Tensor storage; over-aligned so vectorized kernels see the same alignment on every run.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  bool is_leaf() const { return parents.empty(); }

  Buffer<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{0});
    return grad;
  }
};

/// Handle onto a node of the differentiation graph. Copies share the node.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, Buffer<T> values, bool requires_grad = false) {
    if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](std::size_t d) { return d == 0; })) {
      throw ContractViolation("tensor shape must be non-empty with positive dims, got " + shape_str(shape));
    }
    if (numel(shape) != values.size()) {
      throw ContractViolation("tensor shape " + shape_str(shape) + " does not match " +
                              std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  template <typename Alloc>
    requires(!std::is_same_v<std::vector<T, Alloc>, Buffer<T>>)
  static Tensor from(Shape shape, const std::vector<T, Alloc>& values, bool requires_grad = false) {
    return from(std::move(shape), Buffer<T>(values.begin(), values.end()), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return from(std::move(shape), Buffer<T>(n, T{0}), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return from(std::move(shape), Buffer<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) { return from({1}, {value}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const { return node().data.size(); }
  std::size_t rows() const { return shape()[0]; }
  std::size_t cols() const { return rank() >= 2 ? shape()[1] : 1; }

  std::span<const T> data() const { return node().data; }
  std::span<T> mutable_data() { return node().data; }
  T item() const {
    if (size() != 1) throw ContractViolation("item() on tensor of shape " + shape_str(shape()));
    return node().data[0];
  }
  T operator[](std::size_t i) const { return node().data[i]; }
  T at(std::size_t r, std::size_t c) const { return node().data[r * cols() + c]; }

  bool has_grad() const { return !node().grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  std::span<T> mutable_grad() { return node().ensure_grad(); }
  void zero_grad() { node().grad.clear(); }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool flag) {
    if (!node().is_leaf()) throw ContractViolation("requires_grad can only be toggled on leaves");
    node().requires_grad = flag;
  }

  /// Fresh leaf holding a copy of the values, cut from the graph.
  Tensor detach() const { return from(shape(), node().data, false); }

  /// Deep copy of a leaf, keeping requires_grad but not the gradient.
  Tensor clone() const { return from(shape(), node().data, requires_grad()); }

  /// Reverse-mode sweep from this scalar. Returns the number of graph nodes visited.
  std::size_t backward() const;

  Node<T>& node() const {
    if (!node_) throw ContractViolation("use of an undefined tensor");
    return *node_;
  }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
std::size_t Tensor<T>::backward() const {
  if (size() != 1) {
    throw ContractViolation("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) return 0;

  // Iterative post-order DFS gives a topological order without recursion depth limits.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  // Interior gradients are only needed during the sweep.
  for (Node<T>* n : order) {
    if (!n->is_leaf()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
  return order.size();
}

}  // namespace terl::ndgrad
