#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "petlab/tensor/tensor.hpp"

namespace petlab::tensor {

/// Seeded uniform values in [lo, hi). With min_abs > 0, values closer to
/// zero than min_abs are pushed out to +-min_abs (keeps away from kinks).
template <typename T>
BasicTensor<T> seeded_uniform(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                              double hi = 1.0, double min_abs = 0.0, bool requires_grad = true);

/// Seeded values whose entries are a shuffled grid with the given spacing,
/// so no two entries tie (used for max pooling).
template <typename T>
BasicTensor<T> seeded_distinct(const Shape& shape, std::uint64_t seed, double spacing = 0.01,
                               bool requires_grad = true);

struct GradCheckEntry {
  std::string input;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool passed = false;

  double worst() const;
  std::string summary() const;
};

struct GradCheckOptions {
  double tolerance = 1e-2;
  double step = 1e-3;
  std::uint64_t projection_seed = 7;
};

/// Compares backward() gradients of `op` against central finite differences.
///
/// The scalar under test is sum(w * op(inputs)) with fixed seeded weights w,
/// evaluated in 64-bit. Per input, the error is
/// max_i |analytic_i - numeric_i| / max(max|analytic|, max|numeric|).
template <typename T>
GradCheckReport grad_check(
    const std::function<BasicTensor<T>(const std::vector<BasicTensor<T>>&)>& op,
    std::vector<BasicTensor<T>> inputs, const std::vector<std::string>& names,
    const GradCheckOptions& options = {});

extern template Tensor seeded_uniform<float>(const Shape&, std::uint64_t, double, double, double, bool);
extern template Tensor64 seeded_uniform<double>(const Shape&, std::uint64_t, double, double, double,
                                                bool);
extern template Tensor seeded_distinct<float>(const Shape&, std::uint64_t, double, bool);
extern template Tensor64 seeded_distinct<double>(const Shape&, std::uint64_t, double, bool);
extern template GradCheckReport grad_check<float>(
    const std::function<Tensor(const std::vector<Tensor>&)>&, std::vector<Tensor>,
    const std::vector<std::string>&, const GradCheckOptions&);
extern template GradCheckReport grad_check<double>(
    const std::function<Tensor64(const std::vector<Tensor64>&)>&, std::vector<Tensor64>,
    const std::vector<std::string>&, const GradCheckOptions&);

} // namespace petlab::tensor
