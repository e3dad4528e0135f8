#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "petlab/tensor/tensor.hpp"

namespace petlab::tensor {

enum class Mode { train, eval };

/// Running statistics of one batch-norm layer.
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  bool initialized = false;
  double momentum = 0.9; // weight of the previous running value

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

inline constexpr double kBatchNormEpsilon = 1e-5;

// --- network layers (NCHW) --------------------------------------------------

/// 3x3 convolution, stride 1, one pixel of zero padding. `bias` may be
/// undefined for a bias-free convolution.
template <typename T>
BasicTensor<T> conv2d_same(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                           const BasicTensor<T>& bias);

/// Per-channel normalisation over (N,H,W). Train mode uses batch moments and
/// updates `state`; eval mode uses the running moments.
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, BatchNormState<T>& state, Mode mode,
                          double epsilon = kBatchNormEpsilon);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// 2x2 max pooling, stride 2. Gradient goes to the first maximum in
/// row-major order within each window.
template <typename T>
BasicTensor<T> maxpool2x2(const BasicTensor<T>& input);

/// 2x bilinear upsampling, half-pixel centres (align-corners false), edge clamped.
template <typename T>
BasicTensor<T> upsample_bilinear2x(const BasicTensor<T>& input);

/// 2x2 average pooling, stride 2; a trailing odd row/column is dropped.
template <typename T>
BasicTensor<T> avgpool2x2(const BasicTensor<T>& input);

/// Separable "valid" filtering of every (n,c) plane with the same 1-D kernel
/// along both axes. Output spatial size shrinks by kernel.size() - 1.
template <typename T>
BasicTensor<T> separable_filter_valid(const BasicTensor<T>& input, std::span<const double> kernel);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Channels [start, start + count) of an NCHW tensor.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t start, std::size_t count);

// --- elementwise ------------------------------------------------------------

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> square(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, double factor);
template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& input, double value);
/// max(x, floor); gradient passes only where x > floor.
template <typename T>
BasicTensor<T> clamp_min(const BasicTensor<T>& input, double floor);
/// x^exponent for strictly positive x.
template <typename T>
BasicTensor<T> pow_scalar(const BasicTensor<T>& input, double exponent);

// --- reductions (64-bit accumulation) ---------------------------------------

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input);
/// Rank-0 mean of all elements.
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& input);
/// Mean over every axis but the first: shape (N, ...) -> (N).
template <typename T>
BasicTensor<T> mean_per_sample(const BasicTensor<T>& input);

} // namespace petlab::tensor
