#include "petlab/tensor/autograd.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace petlab::tensor {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace detail {
bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
} // namespace detail

template <typename T>
Tape<T> Tape<T>::record(const BasicTensor<T>& root) {
  Tape tape;
  using Node = detail::Node<T>;
  std::unordered_set<const Node*> visited;
  // Iterative post-order DFS so deep networks cannot overflow the stack.
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node_ptr(), 0);
  visited.insert(root.node_ptr().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto parent = node->parents[next++];
      if (visited.insert(parent.get()).second) stack.emplace_back(std::move(parent), 0);
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

template <typename T>
std::size_t Tape<T>::run_backward() const {
  std::size_t invoked = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& node = **it;
    if (!node.backward || !node.requires_grad) continue;
    node.ensure_grad();
    node.backward(node);
    ++invoked;
  }
  return invoked;
}

template <typename T>
void backward(const BasicTensor<T>& loss, BackwardOptions options) {
  if (!loss.defined() || loss.rank() != 0) {
    throw ContractError("backward() requires a rank-0 loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss that was not produced by recorded operations");
  }
  const auto tape = Tape<T>::record(loss);
  for (const auto& node : tape.nodes()) {
    if (node->backward) {
      node->grad.assign(node->data.size(), T(0));
    } else if (node->requires_grad && (!options.accumulate || node->grad.size() != node->data.size())) {
      node->grad.assign(node->data.size(), T(0));
    }
  }
  loss.node_ptr()->grad.assign(1, T(1));
  tape.run_backward();
}

template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor&, BackwardOptions);
template void backward<double>(const Tensor64&, BackwardOptions);

} // namespace petlab::tensor
