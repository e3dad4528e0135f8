#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "petlab/errors.hpp"

namespace petlab::tensor {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad; // empty until a backward pass reaches this node
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into the parents' grad buffers.
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

bool& grad_mode_flag();

} // namespace detail

/// Dense row-major tensor with an optional gradient slot.
///
/// A tensor is a handle: copies share the underlying node, which is what
/// lets operation outputs remember their inputs for the backward pass.
/// Use clone() for an independent deep copy.
template <typename T>
class BasicTensor {
public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor() = default;
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel_of(shape);
    return from_data(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static BasicTensor full(Shape shape, T value, bool requires_grad = false) {
    const auto n = numel_of(shape);
    return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static BasicTensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    }
    if (numel_of(shape) != data.size()) {
      throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                       shape_string(shape));
    }
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return BasicTensor(std::move(node));
  }

  static BasicTensor scalar(T value, bool requires_grad = false) {
    return from_data({}, std::vector<T>{value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t dim(std::size_t axis) const { return node().shape.at(axis); }
  std::size_t numel() const { return node().data.size(); }

  std::span<const T> data() const { return node().data; }
  /// Direct write access; only meaningful on leaves (parameters, inputs).
  std::span<T> mutable_data() { return node().data; }
  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return node().data[0];
  }
  T operator[](std::size_t i) const { return node().data[i]; }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool flag) { node().requires_grad = flag; }
  bool is_leaf() const { return !node().backward; }
  std::string_view op_name() const { return node().op; }

  bool has_grad() const { return node().grad.size() == node().data.size(); }
  std::span<const T> grad() const {
    if (!has_grad()) throw StateError("tensor has no gradient; run backward() first");
    return node().grad;
  }
  std::span<T> mutable_grad() { return node().ensure_grad(); }
  void zero_grad() {
    if (has_grad()) std::fill(node().grad.begin(), node().grad.end(), T(0));
  }
  void clear_grad() { node().grad.clear(); }

  /// Deep copy of shape and values, detached from any graph.
  BasicTensor clone() const {
    auto out = from_data(shape(), node().data, false);
    return out;
  }
  /// Shares no graph history; values copied.
  BasicTensor detach() const { return clone(); }

  NodePtr node_ptr() const { return node_; }

private:
  detail::Node<T>& node() const {
    if (!node_) throw StateError("use of an undefined tensor");
    return *node_;
  }

  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Whether newly created op outputs record their inputs for backward().
inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

template <typename T>
BasicTensor<T> make_op_result(Shape shape, std::vector<T> data, std::string_view op,
                              std::vector<BasicTensor<T>> inputs,
                              std::function<void(detail::Node<T>&)> backward) {
  auto out = BasicTensor<T>::from_data(std::move(shape), std::move(data), false);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  auto node = out.node_ptr();
  node->op = op;
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  return out;
}

} // namespace petlab::tensor
