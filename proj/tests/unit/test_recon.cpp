#include <cmath>
#include <numeric>

#include "doctest.h"
#include "petlab/recon/dataset.hpp"
#include "petlab/recon/osem.hpp"

using namespace petlab;
using namespace petlab::recon;

namespace {

Image disk(std::size_t n, double radius, float value) {
  Image img(n, n);
  const double c = 0.5 * (n - 1.0);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if (std::hypot(x - c, y - c) < radius) img.at(y, x) = value;
  return img;
}

double fov_nrmse(const Image& x, const Image& ref) {
  const auto fov = field_of_view(ref.height, ref.width);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!fov[i]) continue;
    num += std::pow(double(x.pixels[i]) - ref.pixels[i], 2);
    den += std::pow(double(ref.pixels[i]), 2);
  }
  return std::sqrt(num / den);
}

// One MLEM update written out with full-sinogram projections in double.
std::vector<double> mlem_step(const sim::ParallelBeamProjector& P, const std::vector<double>& x,
                              const std::vector<float>& y, const std::vector<std::uint8_t>& fov) {
  std::vector<float> xf(x.begin(), x.end());
  const auto ax = P.forward(xf);
  std::vector<float> ratio(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) ratio[i] = static_cast<float>(y[i] / (double(ax[i]) + 1e-10));
  const auto num = P.back(ratio);
  const auto sens = P.back(std::vector<float>(y.size(), 1.0f));
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    if (fov[i]) out[i] = x[i] * double(num[i]) / double(sens[i]);
  return out;
}

} // namespace

TEST_CASE("partition_subsets") {
  const auto s = partition_subsets(8, 2);
  CHECK(s == std::vector<std::vector<std::size_t>>{{0, 2, 4, 6}, {1, 3, 5, 7}});
  CHECK(partition_subsets(5, 1).front() == std::vector<std::size_t>{0, 1, 2, 3, 4});
  const auto six = partition_subsets(90, 6);
  std::vector<int> seen(90, 0);
  CHECK(six.size() == 6);
  for (const auto& sub : six) {
    CHECK(sub.size() == 15);
    for (auto a : sub) ++seen[a];
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  CHECK_THROWS_AS(partition_subsets(90, 7), ConfigError);
  CHECK_THROWS_AS(partition_subsets(90, 0), ConfigError);
  CHECK_THROWS_AS((ReconConfig{6, 0, 1.0}.validate(90)), ConfigError);
  CHECK_THROWS_AS((ReconConfig{6, 2, 0.0}.validate(90)), ConfigError);
}

TEST_CASE("osem basics") {
  const sim::ParallelBeamProjector P(32, 32, 30, 48);
  SUBCASE("zero counts give a zero image") {
    const OsemReconstructor osem(P, {1, 1, 1.0});
    const auto img = osem.reconstruct(std::vector<float>(P.sinogram_size(), 0.0f));
    for (float v : img.pixels) CHECK(v == 0.0f);
  }
  SUBCASE("outside the reconstruction circle stays zero and values stay nonnegative") {
    const OsemReconstructor osem(P, {5, 3, 1.0});
    const auto y = P.forward(disk(32, 10, 2.0f).pixels);
    const auto img = osem.reconstruct(y);
    const auto fov = field_of_view(32, 32);
    for (std::size_t i = 0; i < img.size(); ++i) {
      CHECK(img.pixels[i] >= 0.0f);
      CHECK(std::isfinite(img.pixels[i]));
      if (!fov[i]) CHECK(img.pixels[i] == 0.0f);
    }
    CHECK(osem.active_pixels() == fov);
  }
  SUBCASE("input errors") {
    const OsemReconstructor osem(P, {1, 1, 1.0});
    std::vector<float> y(P.sinogram_size(), 1.0f);
    y[3] = -1.0f;
    CHECK_THROWS_AS(osem.reconstruct(y), DataError);
    sim::SinogramCounts c{30, 48, std::vector<std::int64_t>(30 * 48, 1)};
    c.counts[0] = -2;
    CHECK_THROWS_AS(osem.reconstruct(c), DataError);
    CHECK_THROWS_AS(OsemReconstructor(P, {7, 1, 1.0}), ConfigError);
  }
}

TEST_CASE("one subset, one iteration equals an MLEM step") {
  const sim::ParallelBeamProjector P(32, 32, 30, 48);
  const auto y = P.forward(disk(32, 9, 3.0f).pixels);
  const auto fov = field_of_view(32, 32);
  std::vector<double> x(fov.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = fov[i] ? 1.0 : 0.0;
  const auto want = mlem_step(P, x, y, fov);
  const auto got = OsemReconstructor(P, {1, 1, 1.0}).reconstruct(y);
  double peak = *std::max_element(want.begin(), want.end());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.pixels[i] - want[i]) <= 1e-6 * peak);

  // two iterations against two oracle steps
  const auto want2 = mlem_step(P, want, y, fov);
  const auto got2 = OsemReconstructor(P, {1, 2, 1.0}).reconstruct(y);
  peak = *std::max_element(want2.begin(), want2.end());
  for (std::size_t i = 0; i < want2.size(); ++i) CHECK(std::abs(got2.pixels[i] - want2[i]) <= 1e-5 * peak);
}

TEST_CASE("noiseless disk convergence") {
  const sim::ParallelBeamProjector P(64, 64, 90, 96);
  const auto truth = disk(64, 20, 1.0f);
  const auto y = P.forward(truth.pixels);

  const auto mlem = OsemReconstructor(P, {1, 50, 1.0}).reconstruct(y);
  const double target = fov_nrmse(mlem, truth);
  MESSAGE("MLEM 50 iterations NRMSE " << target);
  CHECK(target < 0.1);

  const auto ax = P.forward(mlem.pixels);
  const double sy = std::accumulate(y.begin(), y.end(), 0.0), sax = std::accumulate(ax.begin(), ax.end(), 0.0);
  CHECK(std::abs(sax - sy) <= 0.01 * sy);

  std::size_t reached = 0;
  for (std::size_t it = 1; it <= 10 && reached == 0; ++it) {
    const auto img = OsemReconstructor(P, {6, it, 1.0}).reconstruct(y);
    if (fov_nrmse(img, truth) <= 1.2 * target) reached = it;
  }
  MESSAGE("6-subset OSEM within 20% after " << reached << " iterations");
  CHECK(reached > 0);
}

TEST_CASE("dataset construction") {
  sim::AcquisitionConfig acq;
  acq.seed = 5;
  PhantomConfig pc;
  pc.n_subjects = 2;
  pc.seed = 77;
  const auto phantoms = generate_phantoms(pc);
  const auto ds = build_dataset(phantoms, acq, {200.0}, ReconConfig{}, 0);

  REQUIRE(ds.subjects.size() == 2);
  for (const auto& s : ds.subjects) {
    const auto kept = non_air_slices(phantoms[&s - ds.subjects.data()].activity);
    CHECK(s.slice_indices == kept);
    CHECK(s.slice_indices.front() > 0);
    CHECK(s.slice_indices.back() < pc.depth - 1);
    CHECK(s.standard.depth == kept.size());
    CHECK(s.low(200.0).same_shape(s.standard));
    CHECK_THROWS_AS(s.low(4.0), DataError);
    for (float v : s.standard.voxels) CHECK(v >= 0.0f);
  }

  SUBCASE("baseline table matches recomputation") {
    std::vector<metrics::MetricsRecord> again;
    for (const auto& s : ds.subjects) {
      auto rows = baseline_metrics(s, 200.0);
      again.insert(again.end(), rows.begin(), rows.end());
    }
    REQUIRE(again.size() == ds.baseline.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
      CHECK(again[i].subject == ds.baseline[i].subject);
      CHECK(again[i].slice == ds.baseline[i].slice);
      CHECK(again[i].nrmse == ds.baseline[i].nrmse);
      CHECK(again[i].psnr_db == ds.baseline[i].psnr_db);
      CHECK(again[i].ssim == ds.baseline[i].ssim);
      CHECK(std::isfinite(again[i].psnr_db));
    }
  }

  SUBCASE("low dose is worse than standard dose against the phantom") {
    for (const auto& s : ds.subjects) {
      const auto mask = metrics::estimate_brain_mask(s.phantom);
      const auto hi = volume_metrics(s.standard, s.phantom, mask, s.id, "standard", 1.0);
      const auto lo = volume_metrics(s.low(200.0), s.phantom, mask, s.id, "lowdose", 200.0);
      const double a = metrics::aggregate(hi, s.id, "standard", 1.0).nrmse;
      const double b = metrics::aggregate(lo, s.id, "lowdose", 200.0).nrmse;
      MESSAGE(s.id << " NRMSE standard " << a << " low " << b);
      CHECK(b > a);
    }
  }

  SUBCASE("determinism") {
    const auto again = build_dataset(phantoms, acq, {200.0}, ReconConfig{}, 1);
    CHECK(again.subjects[1].low(200.0).voxels == ds.subjects[1].low(200.0).voxels);
    CHECK(again.subjects[0].standard.voxels == ds.subjects[0].standard.voxels);
  }
}

TEST_CASE("dataset errors") {
  const auto a = sim::generate_phantom(1, 8, 32, 32, 0);
  const auto b = sim::generate_phantom(2, 8, 48, 48, 0);
  sim::AcquisitionConfig acq;
  acq.n_bins = 72;
  CHECK_THROWS_AS(build_dataset({a}, acq, {200.0}, ReconConfig{}), ConfigError);
  CHECK_THROWS_AS(build_dataset({a, b}, acq, {200.0}, ReconConfig{}), ConfigError);
  CHECK_THROWS_AS(build_dataset({a, a}, acq, {0.5}, ReconConfig{}), ConfigError);
  CHECK_THROWS_AS(build_dataset({a, a}, acq, {200.0}, ReconConfig{7, 2, 1.0}), ConfigError);
}
