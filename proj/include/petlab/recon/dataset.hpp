#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "petlab/image.hpp"
#include "petlab/metrics/quality.hpp"
#include "petlab/recon/osem.hpp"
#include "petlab/sim/phantom.hpp"
#include "petlab/sim/projector.hpp"

namespace petlab::recon {

struct LowDoseVolume {
  double drf = 1.0;
  Volume volume;
};

/// One synthetic subject with air slices removed. All volumes share the
/// slice list `slice_indices` (positions in the original phantom).
struct Subject {
  std::string id;
  std::uint64_t phantom_seed = 0;
  std::vector<std::size_t> slice_indices;
  Volume phantom;
  Volume standard;
  std::vector<LowDoseVolume> low_dose;
  /// Expected counts per unit activity of this subject's acquisition.
  double count_scale = 0.0;

  const Volume& low(double drf) const;
  std::size_t depth() const { return standard.depth; }
};

struct PhantomConfig {
  std::size_t n_subjects = 9;
  std::size_t depth = 16;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t n_lesions = 2;
  std::uint64_t seed = 2024;
};

struct Dataset {
  std::vector<Subject> subjects;
  sim::AcquisitionConfig acquisition;
  ReconConfig recon;
  std::vector<double> drfs;
  /// Low-dose input vs standard-dose reference, one row per slice and DRF.
  std::vector<metrics::MetricsRecord> baseline;

  const Subject& subject(const std::string& id) const;
};

/// Slices where the phantom is not identically zero.
std::vector<std::size_t> non_air_slices(const Volume& phantom);

/// Generates n_subjects phantoms with seeds derived from `config.seed`.
std::vector<sim::PhantomVolume> generate_phantoms(const PhantomConfig& config);

/// Simulates and reconstructs every non-air slice at standard dose and at
/// each DRF. Low-dose counts are binomial thinnings of the standard-dose
/// counts. Images are divided by the expected counts per unit activity (and
/// by the dose fraction), so all volumes are in phantom units.
Dataset build_dataset(const std::vector<sim::PhantomVolume>& phantoms, const sim::AcquisitionConfig& acq,
                      const std::vector<double>& drfs, const ReconConfig& recon, std::size_t workers = 0);

/// SSIM constants for metrics against a reference volume (L = its maximum).
metrics::SSIMParams metric_ssim_params(const Volume& reference);

/// Masked metrics of `x` against `reference`, one row per slice; slices with
/// an empty mask are skipped and logged. `mask` is the estimate on the
/// reference volume.
std::vector<metrics::MetricsRecord> volume_metrics(const Volume& x, const Volume& reference,
                                                   const metrics::BrainMask& mask, const std::string& subject,
                                                   const std::string& method, double drf);

std::vector<metrics::MetricsRecord> baseline_metrics(const Subject& subject, double drf);

} // namespace petlab::recon
