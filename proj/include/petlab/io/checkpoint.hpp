#pragma once

#include <filesystem>
#include <string>

#include "petlab/net/network.hpp"

namespace petlab::io {

struct CheckpointInfo {
  std::string test_subject;
  std::size_t fold = 0;
  double drf = 0.0;
  std::size_t epochs_completed = 0;
  std::string config_ini; // full experiment config used for training
};

/// Directory with manifest.json and one tensor file per parameter and per
/// running batch-norm statistic.
void save_checkpoint(const std::filesystem::path& dir, net::Network& net, const CheckpointInfo& info);

struct LoadedCheckpoint {
  net::Network network;
  CheckpointInfo info;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

} // namespace petlab::io
