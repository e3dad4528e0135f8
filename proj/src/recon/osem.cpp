#include "petlab/recon/osem.hpp"

#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "petlab/errors.hpp"

namespace petlab::recon {

namespace {
constexpr double kRatioGuard = 1e-10;
}

void ReconConfig::validate(std::size_t n_angles) const {
  if (n_subsets < 1) throw ConfigError("recon.n_subsets must be at least 1");
  if (n_iterations < 1) throw ConfigError("recon.n_iterations must be at least 1");
  if (!(init_value > 0.0) || !std::isfinite(init_value)) throw ConfigError("recon.init_value must be positive");
  if (n_angles % n_subsets != 0) {
    throw ConfigError("recon.n_subsets = " + std::to_string(n_subsets) + " does not divide " +
                      std::to_string(n_angles) + " angles");
  }
}

std::vector<std::vector<std::size_t>> partition_subsets(std::size_t n_angles, std::size_t n_subsets) {
  ReconConfig{n_subsets, 1, 1.0}.validate(n_angles);
  std::vector<std::vector<std::size_t>> out(n_subsets);
  for (std::size_t a = 0; a < n_angles; ++a) out[a % n_subsets].push_back(a);
  return out;
}

std::vector<std::uint8_t> field_of_view(std::size_t height, std::size_t width) {
  std::vector<std::uint8_t> fov(height * width, 0);
  const double cy = 0.5 * (height - 1.0), cx = 0.5 * (width - 1.0), r = 0.5 * width;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      fov[y * width + x] = std::hypot(x - cx, y - cy) < r ? 1 : 0;
  return fov;
}

OsemReconstructor::OsemReconstructor(const sim::ParallelBeamProjector& projector, ReconConfig config)
    : projector_(projector), config_(config) {
  config_.validate(projector.n_angles());
  subsets_ = partition_subsets(projector.n_angles(), config_.n_subsets);
  active_ = field_of_view(projector.height(), projector.width());
  const std::size_t n_pix = active_.size();
  std::size_t dropped = 0;
  for (const auto& angles : subsets_) {
    std::vector<float> ones(angles.size() * projector.n_bins(), 1.0f);
    auto& sens = sensitivity_.emplace_back(n_pix, 0.0);
    projector.back_angles(ones, angles, sens);
    for (std::size_t i = 0; i < n_pix; ++i) {
      if (active_[i] && !(sens[i] > 0.0)) {
        active_[i] = 0;
        ++dropped;
      }
    }
  }
  if (dropped > 0) {
    spdlog::warn("OSEM: {} pixels inside the field of view have zero sensitivity and are fixed at 0", dropped);
  }
}

Image OsemReconstructor::reconstruct(std::span<const float> measured) const {
  const std::size_t nb = projector_.n_bins();
  if (measured.size() != projector_.sinogram_size()) throw ShapeError("sinogram does not match the projector");
  for (float v : measured) {
    if (!std::isfinite(v) || v < 0.0f) throw DataError("sinogram counts must be finite and nonnegative");
  }
  const std::size_t n_pix = active_.size();
  std::vector<float> x(n_pix, 0.0f);
  for (std::size_t i = 0; i < n_pix; ++i)
    if (active_[i]) x[i] = static_cast<float>(config_.init_value);

  std::vector<float> estimate, ratio;
  std::vector<double> correction(n_pix);
  for (std::size_t it = 0; it < config_.n_iterations; ++it) {
    for (std::size_t s = 0; s < subsets_.size(); ++s) {
      const auto& angles = subsets_[s];
      estimate.assign(angles.size() * nb, 0.0f);
      projector_.forward_angles(x, angles, estimate);
      ratio.resize(estimate.size());
      for (std::size_t r = 0; r < angles.size(); ++r)
        for (std::size_t b = 0; b < nb; ++b) {
          const std::size_t k = r * nb + b;
          ratio[k] = static_cast<float>(measured[angles[r] * nb + b] / (static_cast<double>(estimate[k]) + kRatioGuard));
        }
      std::fill(correction.begin(), correction.end(), 0.0);
      projector_.back_angles(ratio, angles, correction);
      const auto& sens = sensitivity_[s];
      for (std::size_t i = 0; i < n_pix; ++i)
        if (active_[i]) x[i] = static_cast<float>(x[i] * correction[i] / sens[i]);
    }
  }
  return Image(projector_.height(), projector_.width(), std::move(x));
}

ReconImage OsemReconstructor::reconstruct(const sim::SinogramCounts& counts) const {
  if (counts.n_angles != projector_.n_angles() || counts.n_bins != projector_.n_bins()) {
    throw ShapeError("sinogram geometry does not match the projector");
  }
  for (auto c : counts.counts)
    if (c < 0) throw DataError("negative counts in sinogram");
  const auto measured = counts.as_float();
  return {reconstruct(measured), counts.dose_fraction, config_, counts.seed};
}

ReconImage osem_reconstruct(const sim::SinogramCounts& counts, const sim::ParallelBeamProjector& projector,
                            const ReconConfig& config) {
  return OsemReconstructor(projector, config).reconstruct(counts);
}

} // namespace petlab::recon
