#include "petlab/recon/dataset.hpp"

#include <algorithm>
#include <cstdio>

#include <spdlog/spdlog.h>

#include "petlab/errors.hpp"
#include "petlab/parallel.hpp"
#include "petlab/rng.hpp"
#include "petlab/sim/acquisition.hpp"

namespace petlab::recon {
namespace {

std::string subject_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "subject_%02zu", i + 1);
  return buf;
}

float volume_max(const Volume& v) {
  return v.voxels.empty() ? 0.0f : *std::max_element(v.voxels.begin(), v.voxels.end());
}

} // namespace

const Volume& Subject::low(double drf) const {
  for (const auto& l : low_dose)
    if (l.drf == drf) return l.volume;
  throw DataError(id + " has no reconstruction at DRF " + std::to_string(drf));
}

const Subject& Dataset::subject(const std::string& id) const {
  for (const auto& s : subjects)
    if (s.id == id) return s;
  throw DataError("unknown subject " + id);
}

std::vector<std::size_t> non_air_slices(const Volume& phantom) {
  std::vector<std::size_t> out;
  for (std::size_t z = 0; z < phantom.depth; ++z) {
    const auto s = phantom.slice_view(z);
    if (std::any_of(s.begin(), s.end(), [](float v) { return v != 0.0f; })) out.push_back(z);
  }
  return out;
}

std::vector<sim::PhantomVolume> generate_phantoms(const PhantomConfig& config) {
  if (config.n_subjects < 2) throw ConfigError("phantom.n_subjects must be at least 2");
  std::vector<sim::PhantomVolume> out;
  for (std::size_t i = 0; i < config.n_subjects; ++i) {
    out.push_back(sim::generate_phantom(derive_seed(config.seed, {i}), config.depth, config.height, config.width,
                                        config.n_lesions));
  }
  return out;
}

Dataset build_dataset(const std::vector<sim::PhantomVolume>& phantoms, const sim::AcquisitionConfig& acq,
                      const std::vector<double>& drfs, const ReconConfig& recon, std::size_t workers) {
  if (phantoms.size() < 2) throw ConfigError("a dataset needs at least 2 phantoms");
  const auto& first = phantoms.front().activity;
  for (const auto& p : phantoms) {
    if (!p.activity.same_shape(first)) throw ConfigError("phantoms differ in shape");
  }
  if (drfs.empty()) throw ConfigError("at least one DRF is required");
  std::vector<double> fractions;
  for (double d : drfs) fractions.push_back(sim::DoseConfig::from_drf(d).fraction);
  acq.validate(first.height);
  recon.validate(acq.n_angles);

  const sim::ParallelBeamProjector projector(first.height, first.width, acq.n_angles, acq.n_bins);
  const OsemReconstructor osem(projector, recon);

  Dataset ds;
  ds.acquisition = acq;
  ds.recon = recon;
  ds.drfs = drfs;

  struct Job {
    std::size_t subject, slice;
  };
  std::vector<Job> jobs;
  std::vector<std::vector<std::vector<float>>> expected(phantoms.size());
  for (std::size_t i = 0; i < phantoms.size(); ++i) {
    const auto& ph = phantoms[i].activity;
    Subject s;
    s.id = subject_id(i);
    s.phantom_seed = phantoms[i].seed;
    s.slice_indices = non_air_slices(ph);
    if (s.slice_indices.empty()) throw DataError(s.id + " has no non-air slices");
    const std::size_t d = s.slice_indices.size();
    s.phantom = Volume(d, ph.height, ph.width);
    s.standard = Volume(d, ph.height, ph.width);
    for (double drf : drfs) s.low_dose.push_back({drf, Volume(d, ph.height, ph.width)});

    double mean_total = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const auto slice = ph.slice(s.slice_indices[k]);
      s.phantom.set_slice(k, slice);
      expected[i].push_back(projector.forward(slice.pixels));
      for (float v : expected[i].back()) mean_total += v;
      jobs.push_back({i, k});
    }
    mean_total /= static_cast<double>(d);
    // counts per unit activity, so that the mean slice receives acq.total_counts
    s.count_scale = acq.total_counts / mean_total;
    ds.subjects.push_back(std::move(s));
  }

  parallel_for(jobs.size(), worker_count(workers), [&](std::size_t j) {
    const auto [i, k] = jobs[j];
    auto& s = ds.subjects[i];
    const auto& e = expected[i][k];
    double slice_total = 0.0;
    for (float v : e) slice_total += v;
    const std::size_t z = s.slice_indices[k];
    const auto counts = sim::acquire_counts(e, acq.n_angles, acq.n_bins, slice_total * s.count_scale,
                                            derive_seed(acq.seed, {i, z, 0}));
    auto write = [&](Volume& v, const Image& img, double scale) {
      auto dst = v.slice_view(k);
      for (std::size_t p = 0; p < dst.size(); ++p) dst[p] = static_cast<float>(img.pixels[p] / scale);
    };
    write(s.standard, osem.reconstruct(counts).pixels, s.count_scale);
    for (std::size_t di = 0; di < drfs.size(); ++di) {
      const auto low = sim::thin_counts(counts, sim::DoseConfig{fractions[di]}, derive_seed(acq.seed, {i, z, di + 1}));
      write(s.low_dose[di].volume, osem.reconstruct(low).pixels, s.count_scale * fractions[di]);
    }
  });

  for (const auto& s : ds.subjects) {
    for (double drf : drfs) {
      auto rows = baseline_metrics(s, drf);
      ds.baseline.insert(ds.baseline.end(), rows.begin(), rows.end());
    }
  }
  return ds;
}

metrics::SSIMParams metric_ssim_params(const Volume& reference) {
  const float peak = volume_max(reference);
  if (!(peak > 0.0f)) throw DataError("reference volume is empty");
  return metrics::SSIMParams::for_dynamic_range(peak, 1);
}

std::vector<metrics::MetricsRecord> volume_metrics(const Volume& x, const Volume& reference,
                                                   const metrics::BrainMask& mask, const std::string& subject,
                                                   const std::string& method, double drf) {
  if (!x.same_shape(reference)) throw ShapeError("volumes differ in shape");
  if (mask.depth != reference.depth || mask.height != reference.height || mask.width != reference.width) {
    throw ShapeError("mask does not match the reference volume");
  }
  const auto params = metric_ssim_params(reference);
  std::vector<metrics::MetricsRecord> rows;
  for (std::size_t z = 0; z < reference.depth; ++z) {
    const auto m = mask.slice(z);
    if (m.empty()) {
      spdlog::info("{}: slice {} has an empty brain mask, skipped", subject, z);
      continue;
    }
    const auto r = metrics::slice_metrics(x.slice(z), reference.slice(z), m, params);
    rows.push_back({subject, static_cast<int>(z), method, drf, r.nrmse, r.psnr_db, r.ssim});
  }
  return rows;
}

std::vector<metrics::MetricsRecord> baseline_metrics(const Subject& subject, double drf) {
  const auto mask = metrics::estimate_brain_mask(subject.standard);
  return volume_metrics(subject.low(drf), subject.standard, mask, subject.id, "lowdose", drf);
}

} // namespace petlab::recon
