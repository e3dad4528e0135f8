#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "petlab/image.hpp"
#include "petlab/sim/acquisition.hpp"
#include "petlab/sim/projector.hpp"

namespace petlab::recon {

struct ReconConfig {
  std::size_t n_subsets = 6;
  std::size_t n_iterations = 2;
  double init_value = 1.0;

  void validate(std::size_t n_angles) const;
};

struct ReconImage {
  Image pixels;
  // provenance
  double dose_fraction = 1.0;
  ReconConfig config;
  std::uint64_t seed = 0;
};

/// Subset k holds angles k, k + n_subsets, k + 2 n_subsets, ...
std::vector<std::vector<std::size_t>> partition_subsets(std::size_t n_angles, std::size_t n_subsets);

/// Ordered-subsets EM for one projector geometry. Subset sensitivities and
/// the field-of-view disk are computed once and reused across slices.
class OsemReconstructor {
public:
  OsemReconstructor(const sim::ParallelBeamProjector& projector, ReconConfig config);

  /// Runs n_iterations passes over all subsets on a measured sinogram
  /// (row-major [n_angles, n_bins], nonnegative).
  Image reconstruct(std::span<const float> measured) const;
  ReconImage reconstruct(const sim::SinogramCounts& counts) const;

  const ReconConfig& config() const { return config_; }
  const std::vector<std::vector<std::size_t>>& subsets() const { return subsets_; }
  /// Pixels updated by the algorithm: inside the reconstruction circle and
  /// with positive sensitivity in every subset.
  const std::vector<std::uint8_t>& active_pixels() const { return active_; }

private:
  const sim::ParallelBeamProjector& projector_;
  ReconConfig config_;
  std::vector<std::vector<std::size_t>> subsets_;
  std::vector<std::vector<double>> sensitivity_;
  std::vector<std::uint8_t> active_;
};

/// Pixel centres strictly closer to the image centre than W/2.
std::vector<std::uint8_t> field_of_view(std::size_t height, std::size_t width);

ReconImage osem_reconstruct(const sim::SinogramCounts& counts, const sim::ParallelBeamProjector& projector,
                            const ReconConfig& config);

} // namespace petlab::recon
