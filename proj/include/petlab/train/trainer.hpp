#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "petlab/metrics/losses.hpp"
#include "petlab/metrics/quality.hpp"
#include "petlab/net/network.hpp"
#include "petlab/recon/dataset.hpp"

namespace petlab::train {

struct TrainConfig {
  std::size_t epochs = 30;
  double lr_start = 1e-3;
  double lr_end = 2.5e-4;
  std::size_t batch_size = 8;
  metrics::LossKind loss = metrics::LossKind::l1;
  std::size_t msssim_levels = 3;
  bool augment = true;
  double rho = 0.9;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  /// Held-out metrics every this many epochs (0 = never; the last epoch is
  /// always evaluated when nonzero).
  std::size_t validate_every = 1;

  void validate() const;
};

/// lr_start * (lr_end / lr_start)^(e / (epochs - 1)).
double lr_at_epoch(std::size_t epoch, const TrainConfig& config);

struct OptimizerState {
  std::vector<std::vector<float>> square_avg;
};

/// s <- rho s + (1 - rho) g^2;  p <- p - lr g / (sqrt(s) + eps).
/// Throws RuntimeFailure naming the parameter on a nonfinite gradient,
/// before anything is modified.
void rmsprop_step(const std::vector<net::NamedTensor>& params, OptimizerState& state, double lr, double rho,
                  double epsilon);

/// One element of the dihedral group generated by the flips and transpose,
/// applied as: horizontal flip, vertical flip, then transpose.
struct Augmentation {
  bool flip_h = false;
  bool flip_v = false;
  bool transpose = false;

  /// Three independent fair coin draws.
  static Augmentation draw(std::mt19937_64& rng);
  bool identity() const { return !flip_h && !flip_v && !transpose; }

  /// Applies to every channel of a [C, H, W] (or [H, W]) block in place.
  void apply(std::vector<float>& data, std::size_t channels, std::size_t height, std::size_t width) const;
  void apply_inverse(std::vector<float>& data, std::size_t channels, std::size_t height, std::size_t width) const;
  void apply(Image& image) const;
};

struct Sample {
  net::SliceStack input;
  Image target;
};

/// Same transform on every input channel and on the target.
Sample augment(const Sample& sample, std::mt19937_64& rng);

struct Fold {
  std::vector<std::string> train_subjects;
  std::string test_subject;
};

std::vector<Fold> loocv_folds(const std::vector<std::string>& subject_ids);

struct HistoryRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_nrmse = 0.0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  bool validated = false;
};

struct EvaluationResult {
  Volume prediction;
  std::vector<metrics::MetricsRecord> rows; // per slice, low-dose then prediction
  metrics::MetricsRecord lowdose_mean;
  metrics::MetricsRecord prediction_mean;
};

inline const std::string kLowDoseMethod = "lowdose";
inline const std::string kPredictionMethod = "proposed";

/// Eval-mode prediction of every slice of `input`.
Volume predict_volume(net::Network& net, const Volume& input, std::size_t batch_size = 8);

/// Masked metrics of the low-dose input and of the prediction, both against
/// the standard-dose reference.
EvaluationResult evaluate(net::Network& net, const recon::Subject& subject, double drf, std::size_t batch_size = 8);

struct TrainResult {
  std::vector<HistoryRecord> history;
  std::size_t steps = 0;
};

/// Training samples of the listed subjects at the given DRF.
std::vector<Sample> collect_samples(const recon::Dataset& dataset, const std::vector<std::string>& subjects,
                                    double drf, std::size_t n_slices);

/// Dynamic range for the SSIM-based losses: max of the standard-dose
/// volumes of the training subjects.
double training_dynamic_range(const recon::Dataset& dataset, const std::vector<std::string>& subjects);

using EpochCallback = std::function<void(const HistoryRecord&)>;

/// RMSprop over shuffled, augmented batches with the exponential schedule.
/// On a nonfinite loss the network is restored to its state at the end of
/// the previous epoch and RuntimeFailure is thrown.
TrainResult train(net::Network& net, const recon::Dataset& dataset, const Fold& fold, double drf,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

} // namespace petlab::train
