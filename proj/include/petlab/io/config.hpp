#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "petlab/net/network.hpp"
#include "petlab/recon/dataset.hpp"
#include "petlab/recon/osem.hpp"
#include "petlab/sim/projector.hpp"
#include "petlab/train/trainer.hpp"

namespace petlab::io {

/// Everything one experiment needs. Read from an INI-style file:
///
///   [phantom]      n_subjects depth height width n_lesions seed
///   [acquisition]  n_angles n_bins total_counts seed
///   [dose]         drf (list) | fractions (list)
///   [recon]        n_subsets n_iterations init_value
///   [network]      n_p n_c base_channels n_slices skip_mode seed
///   [train]        epochs lr_start lr_end batch_size loss msssim_levels
///                  augment rho epsilon seed validate_every drf
///   [paths]        dataset output
///
/// Unknown sections or keys are rejected.
struct ExperimentConfig {
  recon::PhantomConfig phantom;
  sim::AcquisitionConfig acquisition;
  std::vector<double> drfs{200.0};
  recon::ReconConfig recon;
  net::NetworkConfig network;
  train::TrainConfig train;
  double train_drf = 200.0;
  std::string dataset_dir = "dataset";
  std::string output_dir = "runs";

  void validate() const;
  /// Canonical INI text; parse(to_ini()) reproduces the config.
  std::string to_ini() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "section.key=value" overrides on top of a config.
ExperimentConfig with_overrides(const ExperimentConfig& base, const std::vector<std::string>& overrides);

} // namespace petlab::io
