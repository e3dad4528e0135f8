#pragma once

// Literal per-window SSIM / MS-SSIM with explicit loops over each patch.
// Statistics are computed as weighted central moments, not via the
// E[x^2] - E[x]^2 shortcut the library uses.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct Gray {
  std::size_t h = 0, w = 0;
  std::vector<double> v;
  double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

inline std::vector<double> gaussian(std::size_t size, double sigma) {
  std::vector<double> g(size);
  double s = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - (static_cast<double>(size) - 1.0) / 2.0;
    g[i] = std::exp(-(d * d) / (2 * sigma * sigma));
    s += g[i];
  }
  for (auto& x : g) x /= s;
  return g;
}

struct SsimTerms {
  std::vector<double> l, cs; // per valid window position
};

inline SsimTerms ssim_terms(const Gray& a, const Gray& b, double c1, double c2, std::size_t size = 11,
                            double sigma = 1.5) {
  const auto g = gaussian(size, sigma);
  SsimTerms out;
  for (std::size_t y = 0; y + size <= a.h; ++y) {
    for (std::size_t x = 0; x + size <= a.w; ++x) {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) {
          mx += g[i] * g[j] * a.at(y + i, x + j);
          my += g[i] * g[j] * b.at(y + i, x + j);
        }
      double sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) {
          const double dx = a.at(y + i, x + j) - mx, dy = b.at(y + i, x + j) - my;
          sxx += g[i] * g[j] * dx * dx;
          syy += g[i] * g[j] * dy * dy;
          sxy += g[i] * g[j] * dx * dy;
        }
      out.l.push_back((2 * mx * my + c1) / (mx * mx + my * my + c1));
      out.cs.push_back((2 * sxy + c2) / (sxx + syy + c2));
    }
  }
  return out;
}

inline double ssim(const Gray& a, const Gray& b, double c1, double c2) {
  const auto t = ssim_terms(a, b, c1, c2);
  double s = 0;
  for (std::size_t i = 0; i < t.l.size(); ++i) s += t.l[i] * t.cs[i];
  return s / static_cast<double>(t.l.size());
}

inline Gray half(const Gray& a) {
  Gray o{a.h / 2, a.w / 2, {}};
  o.v.resize(o.h * o.w);
  for (std::size_t y = 0; y < o.h; ++y)
    for (std::size_t x = 0; x < o.w; ++x)
      o.v[y * o.w + x] =
          (a.at(2 * y, 2 * x) + a.at(2 * y, 2 * x + 1) + a.at(2 * y + 1, 2 * x) + a.at(2 * y + 1, 2 * x + 1)) / 4;
  return o;
}

/// prod_{j<K} mean(cs_j)^(1/K) * mean(l_K cs_K)^(1/K).
inline double msssim(Gray a, Gray b, double c1, double c2, std::size_t levels) {
  double out = 1.0;
  const double w = 1.0 / static_cast<double>(levels);
  for (std::size_t k = 0; k < levels; ++k) {
    const auto t = ssim_terms(a, b, c1, c2);
    double m = 0;
    for (std::size_t i = 0; i < t.l.size(); ++i) m += (k + 1 == levels) ? t.l[i] * t.cs[i] : t.cs[i];
    m /= static_cast<double>(t.l.size());
    out *= std::pow(m, w);
    a = half(a);
    b = half(b);
  }
  return out;
}

} // namespace oracle
