#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "petlab/image.hpp"
#include "petlab/metrics/losses.hpp"

namespace petlab::metrics {

/// Boolean support congruent with an image (depth 1) or a volume.
struct BrainMask {
  std::size_t depth = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> inside;

  std::size_t count() const;
  double coverage() const;
  bool empty() const { return count() == 0; }
  BrainMask slice(std::size_t z) const;
  bool at(std::size_t y, std::size_t x) const { return inside[y * width + x] != 0; }
};

/// Relative intensity threshold of the mask estimate.
inline constexpr double kMaskThreshold = 0.05;

/// Threshold at 5 % of the maximum, keep the largest 4-connected component,
/// fill its holes. Throws DataError for an all-zero image.
BrainMask estimate_brain_mask(const Image& reference);

/// Same on a volume: threshold at 5 % of the volume maximum, largest
/// 6-connected component, holes filled slice by slice.
BrainMask estimate_brain_mask(const Volume& reference);

/// sqrt(sum (x-y)^2 / sum y^2) over masked pixels.
double nrmse(const Image& x, const Image& reference, const BrainMask& mask);

/// 20 log10(MAX / sqrt(MSE)), MAX the reference maximum inside the mask.
/// Identical images give +infinity.
double psnr(const Image& x, const Image& reference, const BrainMask& mask);

/// Mean SSIM over window centres inside the mask, computed on images with
/// everything outside the mask set to zero.
double masked_ssim(const Image& x, const Image& reference, const BrainMask& mask, const SSIMParams& params);

inline constexpr double kPerfectPsnr = std::numeric_limits<double>::infinity();

/// One CSV row; slice < 0 marks an aggregate over slices.
struct MetricsRecord {
  std::string subject;
  int slice = -1;
  std::string method;
  double drf = 1.0;
  double nrmse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct SliceMetrics {
  double nrmse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

SliceMetrics slice_metrics(const Image& x, const Image& reference, const BrainMask& mask,
                           const SSIMParams& params);

/// Mean over records; infinite PSNR values propagate.
MetricsRecord aggregate(const std::vector<MetricsRecord>& rows, const std::string& subject,
                        const std::string& method, double drf);

} // namespace petlab::metrics
