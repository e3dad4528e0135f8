#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace petlab::sim {

/// Fraction of standard-dose counts kept; DRF = 1 / fraction.
struct DoseConfig {
  double fraction = 1.0;

  static DoseConfig from_fraction(double p);
  static DoseConfig from_drf(double drf);
  double drf() const { return 1.0 / fraction; }
};

/// Binned photon counts of one slice, row-major [n_angles, n_bins].
struct SinogramCounts {
  std::size_t n_angles = 0;
  std::size_t n_bins = 0;
  std::vector<std::int64_t> counts;

  // provenance
  double total_counts = 0.0; // requested expected total at standard dose
  double dose_fraction = 1.0;
  std::uint64_t seed = 0;

  std::int64_t total() const;
  std::vector<float> as_float() const { return {counts.begin(), counts.end()}; }
};

/// Scales `expected` so it sums to `total_counts` and draws independent
/// Poisson counts per bin.
SinogramCounts acquire_counts(std::span<const float> expected, std::size_t n_angles, std::size_t n_bins,
                              double total_counts, std::uint64_t seed);

/// Keeps each counted event independently with probability `dose.fraction`
/// (a Binomial(count, p) draw per bin).
SinogramCounts thin_counts(const SinogramCounts& counts, const DoseConfig& dose, std::uint64_t seed);
/// Same, for a raw keep probability in [0, 1].
SinogramCounts thin_counts(const SinogramCounts& counts, double keep_probability, std::uint64_t seed);

} // namespace petlab::sim
