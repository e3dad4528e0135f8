#include "petlab/sim/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace petlab::sim {
namespace {

struct Point3 {
  double x, y, z;
};

// Axis-aligned (after in-plane rotation) ellipsoid with a soft edge.
struct Blob {
  Point3 centre;
  Point3 semi;
  double angle;
  double value;

  double radius(const Point3& p) const {
    const double dx = p.x - centre.x, dy = p.y - centre.y;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / semi.x;
    const double v = (-s * dx + c * dy) / semi.y;
    const double w = (p.z - centre.z) / semi.z;
    return std::sqrt(u * u + v * v + w * w);
  }
};

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

Point3 normalised(std::size_t z, std::size_t y, std::size_t x, std::size_t d, std::size_t h,
                  std::size_t w) {
  return {(static_cast<double>(x) - 0.5 * (w - 1)) / (0.5 * w),
          (static_cast<double>(y) - 0.5 * (h - 1)) / (0.5 * h),
          (static_cast<double>(z) - 0.5 * (d - 1)) / (0.5 * d)};
}

// Axial extent uses a tenth power so cross-sections stay similar until
// close to the crown and base.
double section_scale(const HeadEllipsoid& head, double z) {
  const double w = std::abs(z / head.semi_z);
  return w >= 1.0 ? 0.0 : std::sqrt(1.0 - std::pow(w, 10));
}

// In-plane radius relative to the head cross-section at p.z; < 1 inside.
double head_radius(const HeadEllipsoid& head, const Point3& p) {
  const double scale = section_scale(head, p.z);
  if (scale <= 0.0) return std::numeric_limits<double>::infinity();
  const double c = std::cos(head.rotation), s = std::sin(head.rotation);
  const double u = (c * p.x + s * p.y) / head.semi_x;
  const double v = (-s * p.x + c * p.y) / head.semi_y;
  return std::sqrt(u * u + v * v) / scale;
}

} // namespace

bool HeadEllipsoid::contains(std::size_t z, std::size_t y, std::size_t x, std::size_t d,
                             std::size_t h, std::size_t w) const {
  return head_radius(*this, normalised(z, y, x, d, h, w)) < 1.0;
}

std::size_t PhantomVolume::head_area(std::size_t z) const {
  std::size_t n = 0;
  for (std::size_t y = 0; y < activity.height; ++y)
    for (std::size_t x = 0; x < activity.width; ++x)
      n += head.contains(z, y, x, activity.depth, activity.height, activity.width) ? 1 : 0;
  return n;
}

PhantomVolume generate_phantom(std::uint64_t seed, std::size_t depth, std::size_t height,
                               std::size_t width, std::size_t n_lesions) {
  if (depth < 7) throw ConfigError("phantom depth must be at least 7 slices, got " + std::to_string(depth));
  if (height != width) throw ConfigError("phantom slices must be square");
  if (height < 16) throw ConfigError("phantom slices must be at least 16x16");

  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  PhantomVolume ph;
  ph.seed = seed;
  ph.activity = Volume(depth, height, width);
  // semi_z < (D-1)/D for every D >= 7, so the end slices are air.
  ph.head = {uniform(0.68, 0.78), uniform(0.80, 0.88), uniform(0.80, 0.84), uniform(-0.15, 0.15)};
  const auto& head = ph.head;

  const double white = uniform(0.30, 0.40);
  const double cortex = uniform(0.90, 1.00);
  const double cortex_inner = uniform(0.70, 0.78);

  std::vector<Blob> blobs;
  // deep grey nuclei, roughly mirror-symmetric
  const double nuc_x = uniform(0.18, 0.26), nuc_y = uniform(-0.10, 0.10);
  const double nuc_value = uniform(0.75, 0.90);
  for (double side : {-1.0, 1.0}) {
    blobs.push_back({{side * nuc_x + uniform(-0.02, 0.02), nuc_y, uniform(-0.1, 0.1)},
                     {uniform(0.09, 0.13), uniform(0.14, 0.20), uniform(0.45, 0.65)},
                     uniform(-0.3, 0.3),
                     nuc_value});
  }
  // ventricles
  const double ven_x = uniform(0.06, 0.10);
  for (double side : {-1.0, 1.0}) {
    blobs.push_back({{side * ven_x, uniform(-0.25, -0.05), uniform(-0.05, 0.15)},
                     {uniform(0.04, 0.07), uniform(0.18, 0.28), uniform(0.45, 0.60)},
                     side * uniform(0.0, 0.25),
                     0.08});
  }
  // lesions: hyperintense, placed well inside the brain
  for (std::size_t i = 0; i < n_lesions; ++i) {
    const double r = uniform(0.0, 0.5), phi = uniform(0.0, 2.0 * std::numbers::pi);
    const double sz = uniform(0.07, 0.12);
    blobs.push_back({{r * head.semi_x * std::cos(phi), r * head.semi_y * std::sin(phi), uniform(-0.4, 0.4)},
                     {sz, sz * uniform(0.8, 1.25), uniform(0.20, 0.35)},
                     uniform(0.0, std::numbers::pi),
                     uniform(1.5, 2.2)});
  }

  // slow multiplicative texture, +-10 %
  struct Wave {
    double kx, ky, kz, phase, amp;
  };
  std::vector<Wave> waves(4);
  for (auto& wv : waves) {
    wv = {uniform(-3.0, 3.0), uniform(-3.0, 3.0), uniform(-1.0, 1.0), uniform(0.0, 2.0 * std::numbers::pi),
          0.025};
  }

  for (std::size_t z = 0; z < depth; ++z) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const auto p = normalised(z, y, x, depth, height, width);
        const double rho = head_radius(head, p);
        if (rho >= 1.0) continue;
        // cortical ribbon fading to a dim scalp layer at the edge
        double v = white + (cortex - white) * smoothstep(cortex_inner - 0.06, cortex_inner + 0.04, rho);
        v = v + (0.25 - v) * smoothstep(0.93, 0.99, rho);
        for (const auto& b : blobs) {
          const double rb = b.radius(p);
          if (rb < 1.15) v = v + (b.value - v) * (1.0 - smoothstep(0.85, 1.15, rb));
        }
        double tex = 1.0;
        for (const auto& wv : waves) tex += wv.amp * std::cos(wv.kx * p.x * 3.0 + wv.ky * p.y * 3.0 + wv.kz * p.z + wv.phase);
        ph.activity.at(z, y, x) = static_cast<float>(std::max(v * tex, 0.05));
      }
    }
  }
  return ph;
}

} // namespace petlab::sim
