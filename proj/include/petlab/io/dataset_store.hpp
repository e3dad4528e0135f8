#pragma once

#include <filesystem>

#include "petlab/recon/dataset.hpp"

namespace petlab::io {

inline constexpr const char* kDatasetFormat = "petlab-dataset v1";

/// Layout:
///   manifest.json           geometry, dose levels, seeds, subject list
///   baseline.csv            low-dose vs standard-dose metrics
///   <subject>/phantom.tensor, standard.tensor, drf<D>.tensor
/// Writing the same dataset twice gives byte-identical files.
void save_dataset(const std::filesystem::path& dir, const recon::Dataset& dataset,
                  const recon::PhantomConfig& phantom);

struct StoredDataset {
  recon::Dataset dataset;
  recon::PhantomConfig phantom;
};

/// Baseline rows are recomputed from the stored volumes.
StoredDataset load_dataset(const std::filesystem::path& dir);

std::string drf_tag(double drf);

} // namespace petlab::io
