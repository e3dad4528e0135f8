#include "petlab/sim/acquisition.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "petlab/errors.hpp"

namespace petlab::sim {

DoseConfig DoseConfig::from_fraction(double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ConfigError("dose fraction must lie in (0, 1], got " + std::to_string(p));
  }
  return DoseConfig{p};
}

DoseConfig DoseConfig::from_drf(double drf) {
  if (!(drf >= 1.0) || !std::isfinite(drf)) throw ConfigError("dose reduction factor must be >= 1");
  return DoseConfig{1.0 / drf};
}

std::int64_t SinogramCounts::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

SinogramCounts acquire_counts(std::span<const float> expected, std::size_t n_angles, std::size_t n_bins,
                              double total_counts, std::uint64_t seed) {
  if (expected.size() != n_angles * n_bins) throw ShapeError("expected sinogram does not match geometry");
  if (!(total_counts > 0.0)) throw ConfigError("total_counts must be positive");
  double sum = 0.0;
  for (float v : expected) {
    if (!std::isfinite(v) || v < 0.0f) throw DataError("expected counts must be finite and nonnegative");
    sum += v;
  }
  if (sum <= 0.0) throw DataError("cannot acquire counts from an all-zero expected sinogram");

  SinogramCounts out;
  out.n_angles = n_angles;
  out.n_bins = n_bins;
  out.total_counts = total_counts;
  out.seed = seed;
  out.counts.resize(expected.size());
  const double k = total_counts / sum;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double lambda = k * expected[i];
    out.counts[i] = lambda > 0.0 ? std::poisson_distribution<std::int64_t>(lambda)(rng) : 0;
  }
  return out;
}

SinogramCounts thin_counts(const SinogramCounts& counts, const DoseConfig& dose, std::uint64_t seed) {
  const auto checked = DoseConfig::from_fraction(dose.fraction);
  return thin_counts(counts, checked.fraction, seed);
}

SinogramCounts thin_counts(const SinogramCounts& counts, double keep_probability, std::uint64_t seed) {
  if (!(keep_probability >= 0.0 && keep_probability <= 1.0)) {
    throw ConfigError("keep probability must lie in [0, 1]");
  }
  SinogramCounts out = counts;
  out.dose_fraction = counts.dose_fraction * keep_probability;
  out.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& c : out.counts) {
    if (c < 0) throw DataError("negative counts in sinogram");
    if (keep_probability == 1.0 || c == 0) continue;
    c = keep_probability == 0.0 ? 0 : std::binomial_distribution<std::int64_t>(c, keep_probability)(rng);
  }
  return out;
}

} // namespace petlab::sim
