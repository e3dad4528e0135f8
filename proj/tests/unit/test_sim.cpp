#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "petlab/sim/acquisition.hpp"
#include "petlab/sim/phantom.hpp"
#include "petlab/sim/projector.hpp"

using namespace petlab;
using namespace petlab::sim;

namespace {

double ncc(std::span<const float> a, std::span<const float> b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

bool all_zero(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; });
}

Image disk(std::size_t n, double radius, float value) {
  Image img(n, n);
  const double c = 0.5 * (n - 1.0);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if (std::hypot(x - c, y - c) < radius) img.at(y, x) = value;
  return img;
}

} // namespace

TEST_CASE("generate_phantom") {
  SUBCASE("zero outside the head ellipse, maximum inside") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      auto ph = generate_phantom(seed, 16, 64, 64, 0);
      const auto& v = ph.activity;
      float inside_max = 0.0f;
      float global_max = 0.0f;
      for (std::size_t z = 0; z < v.depth; ++z)
        for (std::size_t y = 0; y < v.height; ++y)
          for (std::size_t x = 0; x < v.width; ++x) {
            const float a = v.at(z, y, x);
            CHECK(a >= 0.0f);
            global_max = std::max(global_max, a);
            if (ph.head.contains(z, y, x, v.depth, v.height, v.width)) {
              inside_max = std::max(inside_max, a);
              CHECK(a > 0.0f);
            } else {
              CHECK(a == 0.0f);
            }
          }
      CHECK(inside_max == global_max);
      CHECK(global_max > 0.0f);
    }
  }
  SUBCASE("deterministic per seed") {
    auto a = generate_phantom(42, 8, 32, 32, 2);
    auto b = generate_phantom(42, 8, 32, 32, 2);
    auto c = generate_phantom(43, 8, 32, 32, 2);
    CHECK(a.activity.voxels == b.activity.voxels);
    CHECK(a.activity.voxels != c.activity.voxels);
  }
  SUBCASE("end slices are air") {
    auto ph = generate_phantom(5, 16, 64, 64, 3);
    CHECK(all_zero(ph.activity.slice_view(0)));
    CHECK(all_zero(ph.activity.slice_view(15)));
    CHECK_FALSE(all_zero(ph.activity.slice_view(7)));
  }
  SUBCASE("adjacent non-air slices are strongly correlated") {
    for (std::uint64_t seed : {11u, 12u, 13u, 14u}) {
      auto ph = generate_phantom(seed, 16, 64, 64, 3);
      std::size_t max_area = 0;
      for (std::size_t z = 0; z < 16; ++z) max_area = std::max(max_area, ph.head_area(z));
      std::size_t pairs = 0;
      for (std::size_t z = 0; z + 1 < 16; ++z) {
        // pairs inside the brain body; the crown slices shrink quickly
        if (10 * ph.head_area(z) < 9 * max_area || 10 * ph.head_area(z + 1) < 9 * max_area) continue;
        CAPTURE(seed);
        CAPTURE(z);
        CHECK(ncc(ph.activity.slice_view(z), ph.activity.slice_view(z + 1)) > 0.9);
        ++pairs;
      }
      CHECK(pairs >= 8);
    }
  }
  SUBCASE("lesions are hyperintense") {
    auto plain = generate_phantom(21, 16, 64, 64, 0);
    auto lesioned = generate_phantom(21, 16, 64, 64, 4);
    const auto mx = [](const Volume& v) { return *std::max_element(v.voxels.begin(), v.voxels.end()); };
    CHECK(mx(lesioned.activity) > mx(plain.activity) * 1.3f);
  }
  SUBCASE("config errors") {
    CHECK_THROWS_AS(generate_phantom(1, 6, 32, 32, 0), ConfigError);
    CHECK_THROWS_AS(generate_phantom(1, 8, 32, 48, 0), ConfigError);
  }
}

TEST_CASE("forward projection") {
  AcquisitionConfig acq{.n_angles = 90, .n_bins = 96, .total_counts = 5e5, .seed = 1};
  SUBCASE("zero image projects to zero") {
    auto s = forward_project(Image(64, 64), acq);
    CHECK(s.size() == 90 * 96);
    CHECK(all_zero(s));
  }
  SUBCASE("uniform disk follows the analytic chord length") {
    const double r = 20.0;
    const float value = 1.5f;
    auto s = forward_project(disk(64, r, value), acq);
    const double peak = 2.0 * r * value;
    for (std::size_t a = 0; a < acq.n_angles; ++a) {
      for (std::size_t b = 0; b < acq.n_bins; ++b) {
        const double sb = b - 0.5 * (acq.n_bins - 1.0);
        const double chord = std::abs(sb) < r ? 2.0 * std::sqrt(r * r - sb * sb) * value : 0.0;
        CHECK(std::abs(s[a * acq.n_bins + b] - chord) <= 0.05 * peak);
      }
    }
  }
  SUBCASE("impulse traces a sinusoid") {
    Image img(64, 64);
    const std::size_t px = 45, py = 20;
    img.at(py, px) = 1.0f;
    auto s = forward_project(img, acq);
    const double c = 31.5;
    for (std::size_t a = 0; a < acq.n_angles; ++a) {
      const double theta = std::numbers::pi * a / acq.n_angles;
      const double expected = (px - c) * std::cos(theta) + (py - c) * std::sin(theta) + 0.5 * (acq.n_bins - 1.0);
      const auto row = std::span<const float>(s).subspan(a * acq.n_bins, acq.n_bins);
      const auto arg = std::distance(row.begin(), std::max_element(row.begin(), row.end()));
      CHECK(std::abs(static_cast<double>(arg) - expected) <= 1.0);
    }
  }
  SUBCASE("linear in the image") {
    auto p1 = generate_phantom(3, 8, 32, 32, 1);
    AcquisitionConfig small{.n_angles = 30, .n_bins = 48};
    auto a = p1.activity.slice(3);
    auto b = p1.activity.slice(4);
    Image combo(32, 32);
    for (std::size_t i = 0; i < combo.size(); ++i) combo.pixels[i] = 2.0f * a.pixels[i] + 0.5f * b.pixels[i];
    auto sa = forward_project(a, small), sb = forward_project(b, small), sc = forward_project(combo, small);
    for (std::size_t i = 0; i < sc.size(); ++i) CHECK(std::abs(sc[i] - (2.0 * sa[i] + 0.5 * sb[i])) < 1e-4);
  }
  SUBCASE("adjoint test") {
    for (std::uint64_t seed : {7u, 8u, 9u}) {
      ParallelBeamProjector proj(64, 64, 90, 96);
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<float> u(0.0f, 1.0f);
      std::vector<float> x(64 * 64), y(90 * 96);
      for (auto& v : x) v = u(rng);
      for (auto& v : y) v = u(rng);
      auto ax = proj.forward(x);
      auto aty = proj.back(y);
      double lhs = 0, rhs = 0;
      for (std::size_t i = 0; i < y.size(); ++i) lhs += static_cast<double>(ax[i]) * y[i];
      for (std::size_t i = 0; i < x.size(); ++i) rhs += static_cast<double>(x[i]) * aty[i];
      CHECK(std::abs(lhs - rhs) / std::abs(lhs) < 1e-4);
    }
  }
  SUBCASE("config validation") {
    CHECK_THROWS_AS(forward_project(Image(64, 64), {.n_angles = 4, .n_bins = 96}), ConfigError);
    CHECK_THROWS_AS(forward_project(Image(64, 64), {.n_angles = 90, .n_bins = 32}), ConfigError);
  }
}

TEST_CASE("acquire_counts") {
  SUBCASE("uniform expectation: empirical mean within 3 standard errors") {
    const std::size_t na = 10, nb = 20;
    std::vector<float> expected(na * nb, 1.0f);
    const double lambda = 1e6 / (na * nb);
    const int seeds = 50;
    std::vector<double> mean(na * nb, 0.0);
    for (int s = 0; s < seeds; ++s) {
      auto c = acquire_counts(expected, na, nb, 1e6, 1000 + s);
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += c.counts[i];
    }
    double grand = 0;
    for (auto& m : mean) {
      m /= seeds;
      grand += m;
    }
    grand /= mean.size();
    // per-bin standard error sqrt(lambda / seeds); grand mean over all bins
    const double se_grand = std::sqrt(lambda / (seeds * mean.size()));
    CHECK(std::abs(grand - lambda) < 3.0 * se_grand);
    std::size_t outliers = 0;
    for (auto m : mean) outliers += std::abs(m - lambda) > 3.0 * std::sqrt(lambda / seeds) ? 1 : 0;
    CHECK(outliers <= 3); // ~0.27 % expected of 200 bins
  }
  SUBCASE("zero-expectation bins stay zero") {
    std::vector<float> expected = {0.0f, 1.0f, 2.0f, 0.0f};
    for (std::uint64_t s = 0; s < 20; ++s) {
      auto c = acquire_counts(expected, 2, 2, 1000.0, s);
      CHECK(c.counts[0] == 0);
      CHECK(c.counts[3] == 0);
    }
  }
  SUBCASE("deterministic per seed") {
    std::vector<float> expected(64, 1.0f);
    CHECK(acquire_counts(expected, 8, 8, 1e4, 5).counts == acquire_counts(expected, 8, 8, 1e4, 5).counts);
  }
  SUBCASE("Poisson variance at lambda=100") {
    std::vector<float> expected = {1.0f};
    std::vector<double> draws;
    for (std::uint64_t s = 0; s < 1000; ++s) draws.push_back(acquire_counts(expected, 1, 1, 100.0, s).counts[0]);
    double m = 0, v = 0;
    for (auto d : draws) m += d;
    m /= draws.size();
    for (auto d : draws) v += (d - m) * (d - m);
    v /= draws.size() - 1;
    CHECK(std::abs(v - 100.0) < 15.0);
  }
  SUBCASE("degenerate input") {
    std::vector<float> zeros(16, 0.0f);
    CHECK_THROWS_AS(acquire_counts(zeros, 4, 4, 100.0, 1), DataError);
  }
}

TEST_CASE("thin_counts") {
  std::vector<float> expected(90 * 96, 1.0f);
  auto full = acquire_counts(expected, 90, 96, 1e6, 77);
  SUBCASE("p = 1 is the identity") { CHECK(thin_counts(full, DoseConfig::from_fraction(1.0), 3).counts == full.counts); }
  SUBCASE("p = 0 keeps nothing") {
    auto none = thin_counts(full, 0.0, 3);
    CHECK(none.total() == 0);
  }
  SUBCASE("p = 0.005 on 1e6 counts stays within 3 sigma of 5000") {
    const double n = static_cast<double>(full.total());
    const double p = 0.005;
    const double sigma = std::sqrt(n * p * (1 - p));
    double mean_total = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const double kept = static_cast<double>(thin_counts(full, DoseConfig::from_drf(200), 500 + s).total());
      CHECK(std::abs(kept - n * p) < 3.0 * sigma + 1e-9);
      mean_total += kept;
    }
    mean_total /= 100.0;
    // expectation preserved: mean ratio within p +- 3 sigma / N
    CHECK(std::abs(mean_total / n - p) < 3.0 * sigma / n);
  }
  SUBCASE("thinned counts never exceed the source") {
    auto low = thin_counts(full, 0.3, 9);
    for (std::size_t i = 0; i < low.counts.size(); ++i) CHECK(low.counts[i] <= full.counts[i]);
    CHECK(low.dose_fraction == doctest::Approx(0.3));
  }
  SUBCASE("dose validation") {
    CHECK_THROWS_AS(DoseConfig::from_fraction(1.5), ConfigError);
    CHECK_THROWS_AS(DoseConfig::from_fraction(0.0), ConfigError);
    CHECK(DoseConfig::from_drf(200).fraction == doctest::Approx(0.005));
  }
}
