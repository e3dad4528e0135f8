#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "petlab/image.hpp"

namespace petlab::sim {

/// Scanner geometry and count level of a simulated acquisition.
struct AcquisitionConfig {
  std::size_t n_angles = 90;
  std::size_t n_bins = 96;
  double total_counts = 5e5; // expected counts per slice at standard dose
  std::uint64_t seed = 0;

  void validate(std::size_t image_height) const;
};

/// Parallel-beam projector over [0, pi). Each angle rotates the image by
/// bilinear interpolation onto a detector-aligned grid of unit spacing and
/// sums along the ray direction. Weights are precomputed once per geometry,
/// and back_project applies exactly the transposed weights.
class ParallelBeamProjector {
public:
  ParallelBeamProjector(std::size_t height, std::size_t width, std::size_t n_angles, std::size_t n_bins);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t n_angles() const { return n_angles_; }
  std::size_t n_bins() const { return n_bins_; }
  std::size_t sinogram_size() const { return n_angles_ * n_bins_; }
  double angle(std::size_t a) const;

  /// Line integrals, row-major [n_angles, n_bins].
  std::vector<float> forward(std::span<const float> image) const;
  std::vector<float> back(std::span<const float> sinogram) const;

  /// Projection restricted to the listed angles; rows of the result follow
  /// the order of `angles`.
  void forward_angles(std::span<const float> image, std::span<const std::size_t> angles,
                      std::span<float> out) const;
  /// Adds the back projection of rows (ordered like `angles`) into `image`.
  void back_angles(std::span<const float> rows, std::span<const std::size_t> angles,
                   std::span<double> image) const;

private:
  std::size_t height_, width_, n_angles_, n_bins_;
  std::vector<std::size_t> ray_start_; // CSR row pointers, one row per (angle, bin)
  std::vector<std::uint32_t> pixel_;
  std::vector<float> weight_;
};

/// forward_project(slice, config): line integrals of one slice.
std::vector<float> forward_project(const Image& slice, const AcquisitionConfig& config);
std::vector<float> back_project(std::span<const float> sinogram, std::size_t height, std::size_t width,
                                const AcquisitionConfig& config);

} // namespace petlab::sim
