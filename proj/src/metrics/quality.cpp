#include "petlab/metrics/quality.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "petlab/tensor/ops.hpp"

namespace petlab::metrics {
namespace {

void check_pair(const Image& x, const Image& reference, const BrainMask& mask) {
  if (!x.same_shape(reference)) throw ShapeError("metric inputs differ in shape");
  if (mask.depth != 1 || mask.height != x.height || mask.width != x.width) {
    throw ShapeError("mask does not match image shape");
  }
}

// Label the largest connected component of `on` in a depth x height x width
// grid (6-neighbourhood; 4 when depth == 1). Ties keep the first in raster order.
std::vector<std::uint8_t> largest_component(const std::vector<std::uint8_t>& on, std::size_t d, std::size_t h,
                                            std::size_t w) {
  std::vector<std::int32_t> label(on.size(), -1);
  std::vector<std::size_t> queue;
  std::int32_t best = -1, next = 0;
  std::size_t best_size = 0;
  const std::size_t plane = h * w;
  for (std::size_t seed = 0; seed < on.size(); ++seed) {
    if (!on[seed] || label[seed] >= 0) continue;
    queue.assign(1, seed);
    label[seed] = next;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t i = queue[head];
      const std::size_t z = i / plane, y = (i % plane) / w, x = i % w;
      auto visit = [&](std::size_t j) {
        if (on[j] && label[j] < 0) {
          label[j] = next;
          queue.push_back(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < w) visit(i + 1);
      if (y > 0) visit(i - w);
      if (y + 1 < h) visit(i + w);
      if (z > 0) visit(i - plane);
      if (z + 1 < d) visit(i + plane);
    }
    if (queue.size() > best_size) {
      best_size = queue.size();
      best = next;
    }
    ++next;
  }
  std::vector<std::uint8_t> out(on.size(), 0);
  for (std::size_t i = 0; i < on.size(); ++i) out[i] = label[i] == best ? 1 : 0;
  return out;
}

// Background pixels not reachable from the border become foreground.
void fill_holes(std::uint8_t* m, std::size_t h, std::size_t w) {
  std::vector<std::uint8_t> outside(h * w, 0);
  std::vector<std::size_t> queue;
  auto push = [&](std::size_t i) {
    if (!m[i] && !outside[i]) {
      outside[i] = 1;
      queue.push_back(i);
    }
  };
  for (std::size_t x = 0; x < w; ++x) {
    push(x);
    push((h - 1) * w + x);
  }
  for (std::size_t y = 0; y < h; ++y) {
    push(y * w);
    push(y * w + w - 1);
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t i = queue[head];
    const std::size_t y = i / w, x = i % w;
    if (x > 0) push(i - 1);
    if (x + 1 < w) push(i + 1);
    if (y > 0) push(i - w);
    if (y + 1 < h) push(i + w);
  }
  for (std::size_t i = 0; i < h * w; ++i) m[i] = outside[i] ? 0 : 1;
}

BrainMask estimate(std::span<const float> values, std::size_t d, std::size_t h, std::size_t w) {
  float peak = 0.0f;
  for (float v : values) {
    if (!std::isfinite(v)) throw DataError("mask reference contains non-finite values");
    peak = std::max(peak, v);
  }
  if (peak <= 0.0f) throw DataError("cannot estimate a brain mask: reference image is empty");
  const double threshold = kMaskThreshold * peak;
  std::vector<std::uint8_t> on(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) on[i] = values[i] > threshold ? 1 : 0;
  BrainMask mask{d, h, w, largest_component(on, d, h, w)};
  for (std::size_t z = 0; z < d; ++z) fill_holes(mask.inside.data() + z * h * w, h, w);
  return mask;
}

} // namespace

std::size_t BrainMask::count() const {
  return static_cast<std::size_t>(std::count(inside.begin(), inside.end(), std::uint8_t{1}));
}

double BrainMask::coverage() const {
  return inside.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(inside.size());
}

BrainMask BrainMask::slice(std::size_t z) const {
  if (z >= depth) throw ShapeError("mask slice index out of range");
  const std::size_t n = height * width;
  return {1, height, width, std::vector<std::uint8_t>(inside.begin() + z * n, inside.begin() + (z + 1) * n)};
}

BrainMask estimate_brain_mask(const Image& reference) {
  return estimate(reference.pixels, 1, reference.height, reference.width);
}

BrainMask estimate_brain_mask(const Volume& reference) {
  return estimate(reference.voxels, reference.depth, reference.height, reference.width);
}

double nrmse(const Image& x, const Image& reference, const BrainMask& mask) {
  check_pair(x, reference, mask);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask.inside[i]) continue;
    const double r = reference.pixels[i], e = static_cast<double>(x.pixels[i]) - r;
    num += e * e;
    den += r * r;
  }
  if (den <= 0.0) throw DataError("NRMSE reference has zero energy inside the mask");
  return std::sqrt(num / den);
}

double psnr(const Image& x, const Image& reference, const BrainMask& mask) {
  check_pair(x, reference, mask);
  double sse = 0.0, peak = -std::numeric_limits<double>::infinity();
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask.inside[i]) continue;
    const double r = reference.pixels[i], e = static_cast<double>(x.pixels[i]) - r;
    sse += e * e;
    peak = std::max(peak, r);
    ++n;
  }
  if (n == 0) throw DataError("PSNR mask is empty");
  if (sse == 0.0) return kPerfectPsnr;
  return 20.0 * std::log10(peak / std::sqrt(sse / static_cast<double>(n)));
}

double masked_ssim(const Image& x, const Image& reference, const BrainMask& mask, const SSIMParams& params) {
  check_pair(x, reference, mask);
  const std::size_t h = x.height, w = x.width;
  std::vector<double> xm(x.size()), rm(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xm[i] = mask.inside[i] ? x.pixels[i] : 0.0;
    rm[i] = mask.inside[i] ? reference.pixels[i] : 0.0;
  }
  tensor::NoGradGuard guard;
  const auto xt = tensor::Tensor64::from_data({1, 1, h, w}, std::move(xm));
  const auto rt = tensor::Tensor64::from_data({1, 1, h, w}, std::move(rm));
  const auto maps = ssim_maps(xt, rt, params);
  const auto ssim = tensor::mul(maps.luminance, maps.contrast_structure);
  const std::size_t r = (params.window.size() - 1) / 2;
  const std::size_t oh = ssim.dim(2), ow = ssim.dim(3);
  const auto values = ssim.data();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t c = 0; c < ow; ++c) {
      if (!mask.at(y + r, c + r)) continue;
      sum += values[y * ow + c];
      ++n;
    }
  }
  if (n == 0) throw DataError("mask has no pixel at a valid SSIM window centre");
  return sum / static_cast<double>(n);
}

SliceMetrics slice_metrics(const Image& x, const Image& reference, const BrainMask& mask,
                           const SSIMParams& params) {
  return {nrmse(x, reference, mask), psnr(x, reference, mask), masked_ssim(x, reference, mask, params)};
}

MetricsRecord aggregate(const std::vector<MetricsRecord>& rows, const std::string& subject,
                        const std::string& method, double drf) {
  if (rows.empty()) throw DataError("no metric rows to aggregate for " + subject);
  MetricsRecord out{subject, -1, method, drf, 0.0, 0.0, 0.0};
  for (const auto& r : rows) {
    out.nrmse += r.nrmse;
    out.psnr_db += r.psnr_db;
    out.ssim += r.ssim;
  }
  const double n = static_cast<double>(rows.size());
  out.nrmse /= n;
  out.psnr_db /= n;
  out.ssim /= n;
  return out;
}

} // namespace petlab::metrics
