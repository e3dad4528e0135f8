#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "petlab/tensor/tensor.hpp"

namespace petlab::metrics {

/// Constants and window of the (multi-scale) structural similarity index.
struct SSIMParams {
  double c1 = 0.0;
  double c2 = 0.0;
  std::vector<double> window; // normalised 1-D Gaussian taps, applied separably
  std::size_t levels = 1;
  std::vector<double> level_weights{1.0};

  /// C1 = (0.01 L)^2, C2 = (0.03 L)^2, 11-tap Gaussian with sigma 1.5 and
  /// uniform level weights.
  static SSIMParams for_dynamic_range(double dynamic_range, std::size_t levels = 1);

  void validate() const;
  /// Smallest image side that supports all levels.
  std::size_t min_image_size() const;
};

std::vector<double> gaussian_window(std::size_t size, double sigma);

enum class LossKind { l1, mse, ssim, msssim };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

// All losses take NCHW batches (C = 1 for image losses) and return rank-0
// tensors averaged over the batch.

template <typename T>
tensor::BasicTensor<T> l1_loss(const tensor::BasicTensor<T>& x, const tensor::BasicTensor<T>& y);

template <typename T>
tensor::BasicTensor<T> mse_loss(const tensor::BasicTensor<T>& x, const tensor::BasicTensor<T>& y);

/// Per-centre luminance and contrast-structure maps over valid window centres.
template <typename T>
struct SSIMMaps {
  tensor::BasicTensor<T> luminance;
  tensor::BasicTensor<T> contrast_structure;
};

template <typename T>
SSIMMaps<T> ssim_maps(const tensor::BasicTensor<T>& x, const tensor::BasicTensor<T>& y,
                      const SSIMParams& params);

/// mean(1 - SSIM) over valid window centres and the batch.
template <typename T>
tensor::BasicTensor<T> ssim_loss(const tensor::BasicTensor<T>& x, const tensor::BasicTensor<T>& y,
                                 const SSIMParams& params);

/// Per-image MS-SSIM: mean(l*cs)^w_K at the coarsest level times the product
/// of mean(cs_k)^w_k over the finer levels, 2x2 average pooling in between.
template <typename T>
tensor::BasicTensor<T> msssim(const tensor::BasicTensor<T>& x, const tensor::BasicTensor<T>& y,
                              const SSIMParams& params);

template <typename T>
tensor::BasicTensor<T> msssim_loss(const tensor::BasicTensor<T>& x, const tensor::BasicTensor<T>& y,
                                   const SSIMParams& params);

template <typename T>
tensor::BasicTensor<T> loss(LossKind kind, const tensor::BasicTensor<T>& x, const tensor::BasicTensor<T>& y,
                            const SSIMParams& params);

/// Mean single-scale SSIM of two batches (no gradient).
double ssim_index(const tensor::Tensor64& x, const tensor::Tensor64& y, const SSIMParams& params);

} // namespace petlab::metrics
