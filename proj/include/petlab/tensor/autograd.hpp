#pragma once

#include <cstddef>
#include <vector>

#include "petlab/tensor/tensor.hpp"

namespace petlab::tensor {

/// Topologically ordered record of the operations that produced a tensor.
/// Every node appears after all of its inputs; leaves are included.
template <typename T>
class Tape {
public:
  using NodePtr = typename BasicTensor<T>::NodePtr;

  static Tape record(const BasicTensor<T>& root);

  const std::vector<NodePtr>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse traversal; returns the number of backward rules invoked.
  std::size_t run_backward() const;

private:
  std::vector<NodePtr> nodes_;
};

struct BackwardOptions {
  /// When false (default) leaf gradients are reset before the pass, so two
  /// consecutive calls yield identical gradients.
  bool accumulate = false;
};

/// Populates grad on every requires_grad leaf reachable from `loss`.
template <typename T>
void backward(const BasicTensor<T>& loss, BackwardOptions options = {});

template <typename T>
void zero_grads(std::vector<BasicTensor<T>>& tensors) {
  for (auto& t : tensors) t.zero_grad();
}

extern template class Tape<float>;
extern template class Tape<double>;
extern template void backward<float>(const Tensor&, BackwardOptions);
extern template void backward<double>(const Tensor64&, BackwardOptions);

} // namespace petlab::tensor
