#include "petlab/sim/projector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

namespace petlab::sim {

void AcquisitionConfig::validate(std::size_t image_height) const {
  if (n_angles < 8) throw ConfigError("acquisition.n_angles must be >= 8");
  if (n_bins < image_height) throw ConfigError("acquisition.n_bins must be >= image height");
  if (!(total_counts > 0.0) || !std::isfinite(total_counts)) {
    throw ConfigError("acquisition.total_counts must be positive");
  }
}

ParallelBeamProjector::ParallelBeamProjector(std::size_t height, std::size_t width, std::size_t n_angles,
                                             std::size_t n_bins)
    : height_(height), width_(width), n_angles_(n_angles), n_bins_(n_bins) {
  if (height == 0 || width == 0 || n_angles == 0 || n_bins == 0) {
    throw ConfigError("projector dimensions must be positive");
  }
  const double cx = 0.5 * (static_cast<double>(width) - 1.0);
  const double cy = 0.5 * (static_cast<double>(height) - 1.0);
  const auto n_samples =
      static_cast<std::size_t>(std::ceil(std::hypot(static_cast<double>(height), static_cast<double>(width)))) + 2;
  const double s0 = 0.5 * (static_cast<double>(n_bins) - 1.0);
  const double t0 = 0.5 * (static_cast<double>(n_samples) - 1.0);

  ray_start_.reserve(n_angles * n_bins + 1);
  ray_start_.push_back(0);
  std::vector<std::pair<std::uint32_t, float>> entries;
  for (std::size_t a = 0; a < n_angles; ++a) {
    const double theta = angle(a);
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::size_t b = 0; b < n_bins; ++b) {
      entries.clear();
      const double sb = static_cast<double>(b) - s0;
      for (std::size_t k = 0; k < n_samples; ++k) {
        const double t = static_cast<double>(k) - t0;
        const double px = cx + sb * c - t * s;
        const double py = cy + sb * s + t * c;
        const double fx = std::floor(px), fy = std::floor(py);
        const double wx = px - fx, wy = py - fy;
        const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
        const double wts[4] = {(1 - wx) * (1 - wy), wx * (1 - wy), (1 - wx) * wy, wx * wy};
        const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
        const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
        for (int q = 0; q < 4; ++q) {
          if (xs[q] < 0 || ys[q] < 0 || xs[q] >= static_cast<long>(width) || ys[q] >= static_cast<long>(height))
            continue;
          if (wts[q] <= 0.0) continue;
          entries.emplace_back(static_cast<std::uint32_t>(ys[q] * static_cast<long>(width) + xs[q]),
                               static_cast<float>(wts[q]));
        }
      }
      std::sort(entries.begin(), entries.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
      for (std::size_t i = 0; i < entries.size();) {
        std::size_t j = i;
        double acc = 0.0;
        while (j < entries.size() && entries[j].first == entries[i].first) acc += entries[j++].second;
        pixel_.push_back(entries[i].first);
        weight_.push_back(static_cast<float>(acc));
        i = j;
      }
      ray_start_.push_back(pixel_.size());
    }
  }
}

double ParallelBeamProjector::angle(std::size_t a) const {
  return std::numbers::pi * static_cast<double>(a) / static_cast<double>(n_angles_);
}

std::vector<float> ParallelBeamProjector::forward(std::span<const float> image) const {
  std::vector<std::size_t> all(n_angles_);
  for (std::size_t a = 0; a < n_angles_; ++a) all[a] = a;
  std::vector<float> out(sinogram_size());
  forward_angles(image, all, out);
  return out;
}

std::vector<float> ParallelBeamProjector::back(std::span<const float> sinogram) const {
  if (sinogram.size() != sinogram_size()) throw ShapeError("sinogram size does not match projector");
  std::vector<std::size_t> all(n_angles_);
  for (std::size_t a = 0; a < n_angles_; ++a) all[a] = a;
  std::vector<double> acc(height_ * width_, 0.0);
  back_angles(sinogram, all, acc);
  return {acc.begin(), acc.end()};
}

void ParallelBeamProjector::forward_angles(std::span<const float> image, std::span<const std::size_t> angles,
                                           std::span<float> out) const {
  if (image.size() != height_ * width_) throw ShapeError("image size does not match projector");
  if (out.size() != angles.size() * n_bins_) throw ShapeError("output rows do not match angle list");
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const std::size_t a = angles[i];
    for (std::size_t b = 0; b < n_bins_; ++b) {
      const std::size_t r = a * n_bins_ + b;
      double acc = 0.0;
      for (std::size_t e = ray_start_[r]; e < ray_start_[r + 1]; ++e) acc += static_cast<double>(weight_[e]) * image[pixel_[e]];
      out[i * n_bins_ + b] = static_cast<float>(acc);
    }
  }
}

void ParallelBeamProjector::back_angles(std::span<const float> rows, std::span<const std::size_t> angles,
                                        std::span<double> image) const {
  if (image.size() != height_ * width_) throw ShapeError("image size does not match projector");
  if (rows.size() != angles.size() * n_bins_) throw ShapeError("sinogram rows do not match angle list");
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const std::size_t a = angles[i];
    for (std::size_t b = 0; b < n_bins_; ++b) {
      const double v = rows[i * n_bins_ + b];
      if (v == 0.0) continue;
      const std::size_t r = a * n_bins_ + b;
      for (std::size_t e = ray_start_[r]; e < ray_start_[r + 1]; ++e) image[pixel_[e]] += static_cast<double>(weight_[e]) * v;
    }
  }
}

std::vector<float> forward_project(const Image& slice, const AcquisitionConfig& config) {
  config.validate(slice.height);
  for (float v : slice.pixels) {
    if (!std::isfinite(v) || v < 0.0f) throw DataError("forward_project needs a finite nonnegative image");
  }
  ParallelBeamProjector proj(slice.height, slice.width, config.n_angles, config.n_bins);
  return proj.forward(slice.pixels);
}

std::vector<float> back_project(std::span<const float> sinogram, std::size_t height, std::size_t width,
                                const AcquisitionConfig& config) {
  ParallelBeamProjector proj(height, width, config.n_angles, config.n_bins);
  return proj.back(sinogram);
}

} // namespace petlab::sim
