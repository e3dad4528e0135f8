#include "petlab/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "petlab/errors.hpp"
#include "petlab/rng.hpp"
#include "petlab/tensor/autograd.hpp"

namespace petlab::train {

using tensor::Mode;
using tensor::Tensor;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (!(lr_start >= 0.0) || !(lr_end >= 0.0)) throw ConfigError("learning rates must be nonnegative");
  if (lr_end > lr_start) throw ConfigError("train.lr_end must not exceed train.lr_start");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("train.rho must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be positive");
  if (msssim_levels < 1) throw ConfigError("train.msssim_levels must be at least 1");
}

double lr_at_epoch(std::size_t epoch, const TrainConfig& config) {
  if (config.epochs <= 1 || config.lr_start == 0.0) return config.lr_start;
  const double t = static_cast<double>(std::min(epoch, config.epochs - 1)) / static_cast<double>(config.epochs - 1);
  return config.lr_start * std::pow(config.lr_end / config.lr_start, t);
}

void rmsprop_step(const std::vector<net::NamedTensor>& params, OptimizerState& state, double lr, double rho,
                  double epsilon) {
  if (state.square_avg.empty()) {
    for (const auto& p : params) state.square_avg.emplace_back(p.value.numel(), 0.0f);
  }
  if (state.square_avg.size() != params.size()) throw StateError("optimizer state does not match parameters");
  for (const auto& p : params) {
    if (!p.value.has_grad()) throw StateError("parameter " + p.name + " has no gradient");
    for (float g : p.value.grad()) {
      if (!std::isfinite(g)) throw RuntimeFailure("nonfinite gradient in parameter " + p.name);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value;
    const auto g = value.grad();
    auto p = value.mutable_data();
    auto& s = state.square_avg[i];
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double gj = g[j];
      s[j] = static_cast<float>(rho * s[j] + (1.0 - rho) * gj * gj);
      p[j] = static_cast<float>(p[j] - lr * gj / (std::sqrt(static_cast<double>(s[j])) + epsilon));
    }
  }
}

// --- augmentation ------------------------------------------------------------

namespace {

void flip_h(float* c, std::size_t h, std::size_t w) {
  for (std::size_t y = 0; y < h; ++y) std::reverse(c + y * w, c + (y + 1) * w);
}

void flip_v(float* c, std::size_t h, std::size_t w) {
  for (std::size_t y = 0; y < h / 2; ++y) std::swap_ranges(c + y * w, c + (y + 1) * w, c + (h - 1 - y) * w);
}

void transpose(float* c, std::size_t n) {
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = y + 1; x < n; ++x) std::swap(c[y * n + x], c[x * n + y]);
}

void check_block(const std::vector<float>& data, std::size_t channels, std::size_t height, std::size_t width,
                 bool transpose) {
  if (data.size() != channels * height * width) throw ShapeError("augmentation block size mismatch");
  if (transpose && height != width) throw ConfigError("transpose augmentation requires square slices");
}

} // namespace

Augmentation Augmentation::draw(std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  Augmentation a;
  a.flip_h = coin(rng);
  a.flip_v = coin(rng);
  a.transpose = coin(rng);
  return a;
}

void Augmentation::apply(std::vector<float>& data, std::size_t channels, std::size_t height,
                         std::size_t width) const {
  check_block(data, channels, height, width, transpose);
  for (std::size_t c = 0; c < channels; ++c) {
    float* p = data.data() + c * height * width;
    if (flip_h) petlab::train::flip_h(p, height, width);
    if (flip_v) petlab::train::flip_v(p, height, width);
    if (transpose) petlab::train::transpose(p, height);
  }
}

void Augmentation::apply_inverse(std::vector<float>& data, std::size_t channels, std::size_t height,
                                 std::size_t width) const {
  check_block(data, channels, height, width, transpose);
  for (std::size_t c = 0; c < channels; ++c) {
    float* p = data.data() + c * height * width;
    if (transpose) petlab::train::transpose(p, height);
    if (flip_v) petlab::train::flip_v(p, height, width);
    if (flip_h) petlab::train::flip_h(p, height, width);
  }
}

void Augmentation::apply(Image& image) const { apply(image.pixels, 1, image.height, image.width); }

Sample augment(const Sample& sample, std::mt19937_64& rng) {
  const auto a = Augmentation::draw(rng);
  if (a.identity()) return sample;
  const auto& shape = sample.input.channels.shape();
  std::vector<float> data(sample.input.channels.data().begin(), sample.input.channels.data().end());
  a.apply(data, shape[0], shape[1], shape[2]);
  Sample out{{Tensor::from_data(shape, std::move(data)), sample.input.center_index}, sample.target};
  a.apply(out.target);
  return out;
}

// --- folds -------------------------------------------------------------------

std::vector<Fold> loocv_folds(const std::vector<std::string>& subject_ids) {
  if (subject_ids.size() < 2) throw ConfigError("cross validation needs at least 2 subjects");
  if (std::set<std::string>(subject_ids.begin(), subject_ids.end()).size() != subject_ids.size()) {
    throw DataError("duplicate subject ids");
  }
  std::vector<Fold> folds;
  for (const auto& test : subject_ids) {
    Fold f;
    f.test_subject = test;
    for (const auto& s : subject_ids)
      if (s != test) f.train_subjects.push_back(s);
    folds.push_back(std::move(f));
  }
  return folds;
}

// --- evaluation ---------------------------------------------------------------

Volume predict_volume(net::Network& net, const Volume& input, std::size_t batch_size) {
  tensor::NoGradGuard guard;
  Volume out(input.depth, input.height, input.width);
  const std::size_t n = net.config().n_slices;
  for (std::size_t z0 = 0; z0 < input.depth; z0 += batch_size) {
    std::vector<net::SliceStack> stacks;
    for (std::size_t z = z0; z < std::min(input.depth, z0 + batch_size); ++z) stacks.push_back(net::stack_slices(input, z, n));
    const auto pred = net.forward(net::make_batch(stacks), Mode::eval);
    const auto values = pred.data();
    std::copy(values.begin(), values.end(), out.slice_view(z0).begin());
  }
  return out;
}

EvaluationResult evaluate(net::Network& net, const recon::Subject& subject, double drf, std::size_t batch_size) {
  const auto& low = subject.low(drf);
  EvaluationResult r;
  r.prediction = predict_volume(net, low, batch_size);
  const auto mask = metrics::estimate_brain_mask(subject.standard);
  auto low_rows = recon::volume_metrics(low, subject.standard, mask, subject.id, kLowDoseMethod, drf);
  auto pred_rows = recon::volume_metrics(r.prediction, subject.standard, mask, subject.id, kPredictionMethod, drf);
  if (low_rows.empty()) throw DataError(subject.id + ": no slice has a nonempty brain mask");
  r.lowdose_mean = metrics::aggregate(low_rows, subject.id, kLowDoseMethod, drf);
  r.prediction_mean = metrics::aggregate(pred_rows, subject.id, kPredictionMethod, drf);
  r.rows = std::move(low_rows);
  r.rows.insert(r.rows.end(), pred_rows.begin(), pred_rows.end());
  return r;
}

// --- training -----------------------------------------------------------------

std::vector<Sample> collect_samples(const recon::Dataset& dataset, const std::vector<std::string>& subjects,
                                    double drf, std::size_t n_slices) {
  std::vector<Sample> out;
  for (const auto& id : subjects) {
    const auto& s = dataset.subject(id);
    const auto& low = s.low(drf);
    for (std::size_t z = 0; z < s.depth(); ++z) out.push_back({net::stack_slices(low, z, n_slices), s.standard.slice(z)});
  }
  if (out.empty()) throw DataError("no training slices");
  return out;
}

double training_dynamic_range(const recon::Dataset& dataset, const std::vector<std::string>& subjects) {
  float peak = 0.0f;
  for (const auto& id : subjects) {
    const auto& v = dataset.subject(id).standard.voxels;
    peak = std::max(peak, *std::max_element(v.begin(), v.end()));
  }
  if (!(peak > 0.0f)) throw DataError("training reference volumes are empty");
  return peak;
}

namespace {

struct Snapshot {
  std::vector<std::vector<float>> params;
  std::vector<tensor::BatchNormState<float>> bn;
};

Snapshot take_snapshot(net::Network& net) {
  Snapshot s;
  for (const auto& p : net.parameters()) s.params.emplace_back(p.value.data().begin(), p.value.data().end());
  for (const auto& [name, st] : net.batch_norm_states()) s.bn.push_back(*st);
  return s;
}

void restore(net::Network& net, const Snapshot& s) {
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto d = params[i].value.mutable_data();
    std::copy(s.params[i].begin(), s.params[i].end(), d.begin());
  }
  auto bn = net.batch_norm_states();
  for (std::size_t i = 0; i < bn.size(); ++i) *bn[i].second = s.bn[i];
}

} // namespace

TrainResult train(net::Network& net, const recon::Dataset& dataset, const Fold& fold, double drf,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto samples = collect_samples(dataset, fold.train_subjects, drf, net.config().n_slices);
  const auto& test = dataset.subject(fold.test_subject);
  const std::size_t h = samples.front().target.height, w = samples.front().target.width;
  net.config().validate_input(h, w);
  const std::size_t levels = config.loss == metrics::LossKind::msssim ? config.msssim_levels : 1;
  const auto ssim_params =
      metrics::SSIMParams::for_dynamic_range(training_dynamic_range(dataset, fold.train_subjects), levels);

  const auto params = net.parameters();
  OptimizerState opt;
  TrainResult result;
  Snapshot last_good = take_snapshot(net);
  std::vector<std::size_t> order(samples.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at_epoch(epoch, config);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, {1, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::mt19937_64 aug_rng(derive_seed(config.seed, {2, epoch}));

    double loss_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      std::vector<net::SliceStack> inputs;
      std::vector<float> targets;
      for (std::size_t i = b0; i < b1; ++i) {
        const auto s = config.augment ? augment(samples[order[i]], aug_rng) : samples[order[i]];
        inputs.push_back(s.input);
        targets.insert(targets.end(), s.target.pixels.begin(), s.target.pixels.end());
      }
      const auto target = Tensor::from_data({b1 - b0, 1, h, w}, std::move(targets));
      const auto pred = net.forward(net::make_batch(inputs), Mode::train);
      const auto loss = metrics::loss(config.loss, pred, target, ssim_params);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        restore(net, last_good);
        throw RuntimeFailure("nonfinite training loss at epoch " + std::to_string(epoch) +
                             "; parameters restored to the previous epoch");
      }
      tensor::backward(loss);
      try {
        rmsprop_step(params, opt, lr, config.rho, config.epsilon);
      } catch (const RuntimeFailure&) {
        restore(net, last_good);
        throw;
      }
      loss_sum += value * static_cast<double>(b1 - b0);
      ++result.steps;
    }

    HistoryRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(samples.size());
    const bool validate = config.validate_every > 0 &&
                          ((epoch + 1) % config.validate_every == 0 || epoch + 1 == config.epochs);
    if (validate) {
      const auto ev = evaluate(net, test, drf, config.batch_size);
      rec.val_nrmse = ev.prediction_mean.nrmse;
      rec.val_psnr = ev.prediction_mean.psnr_db;
      rec.val_ssim = ev.prediction_mean.ssim;
      rec.validated = true;
    }
    spdlog::debug("epoch {} lr {:.3e} loss {:.5f} val psnr {:.2f}", epoch, lr, rec.train_loss, rec.val_psnr);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    last_good = take_snapshot(net);
  }
  return result;
}

} // namespace petlab::train
