#pragma once

// Brute-force reference implementations used only by tests. They share no
// code with the library so they can catch errors in its fast paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

/// Direct sliding-window 3x3 convolution with zero padding, NCHW layout.
inline std::vector<double> conv3x3(const std::vector<double>& in, std::size_t n, std::size_t c,
                                   std::size_t h, std::size_t w, const std::vector<double>& kernel,
                                   std::size_t f, const std::vector<double>& bias) {
  std::vector<double> out(n * f * h * w, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < f; ++o)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t ch = 0; ch < c; ++ch)
            for (int ky = -1; ky <= 1; ++ky)
              for (int kx = -1; kx <= 1; ++kx) {
                const long yy = static_cast<long>(y) + ky, xx = static_cast<long>(x) + kx;
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w))
                  continue;
                acc += in[((s * c + ch) * h + yy) * w + xx] *
                       kernel[((o * c + ch) * 3 + (ky + 1)) * 3 + (kx + 1)];
              }
          out[((s * f + o) * h + y) * w + x] = acc;
        }
  return out;
}

/// 2x bilinear upsampling of a single plane, evaluated pixel by pixel from
/// the half-pixel sampling position with clamping at the borders.
inline std::vector<double> upsample2x(const std::vector<double>& in, std::size_t h, std::size_t w) {
  auto sample = [&](double sy, double sx) {
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    const auto y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
    const auto y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = sy - y0, fx = sx - x0;
    return (1 - fy) * ((1 - fx) * in[y0 * w + x0] + fx * in[y0 * w + x1]) +
           fy * ((1 - fx) * in[y1 * w + x0] + fx * in[y1 * w + x1]);
  };
  std::vector<double> out(4 * h * w);
  for (std::size_t y = 0; y < 2 * h; ++y)
    for (std::size_t x = 0; x < 2 * w; ++x)
      out[y * 2 * w + x] = sample((y + 0.5) / 2.0 - 0.5, (x + 0.5) / 2.0 - 0.5);
  return out;
}

} // namespace oracle
