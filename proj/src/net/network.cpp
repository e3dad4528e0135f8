#include "petlab/net/network.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "petlab/errors.hpp"
#include "petlab/rng.hpp"

namespace petlab::net {

using tensor::Mode;
using tensor::Tensor;

namespace {

constexpr double kInitStd = 0.02;

ConvBlock make_block(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed) {
  ConvBlock b;
  b.name = name;
  b.weight = truncated_normal({out, in, 3, 3}, kInitStd, seed);
  b.gamma = Tensor::full({out}, 1.0f, true);
  b.beta = Tensor::zeros({out}, true);
  b.bn = tensor::BatchNormState<float>(out);
  return b;
}

} // namespace

SkipMode parse_skip_mode(const std::string& name) {
  if (name == "both") return SkipMode::both;
  if (name == "concat_only") return SkipMode::concat_only;
  if (name == "residual_only") return SkipMode::residual_only;
  if (name == "none") return SkipMode::none;
  throw ConfigError("unknown skip mode '" + name + "' (expected both, concat_only, residual_only or none)");
}

std::string to_string(SkipMode mode) {
  switch (mode) {
    case SkipMode::both: return "both";
    case SkipMode::concat_only: return "concat_only";
    case SkipMode::residual_only: return "residual_only";
    case SkipMode::none: return "none";
  }
  return "?";
}

void NetworkConfig::validate() const {
  if (n_p < 2 || n_p > 5) throw ConfigError("network.n_p must lie in 2..5, got " + std::to_string(n_p));
  if (n_c < 1 || n_c > 3) throw ConfigError("network.n_c must lie in 1..3, got " + std::to_string(n_c));
  if (base_channels < 8) throw ConfigError("network.base_channels must be at least 8");
  if (n_slices % 2 == 0 || n_slices > 7) {
    throw ConfigError("network.n_slices must be one of 1, 3, 5, 7, got " + std::to_string(n_slices));
  }
}

void NetworkConfig::validate_input(std::size_t height, std::size_t width) const {
  const std::size_t f = std::size_t{1} << n_p;
  if (height % f != 0 || width % f != 0) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) + " is not divisible by 2^" +
                      std::to_string(n_p) + " = " + std::to_string(f));
  }
}

SliceStack stack_slices(const Volume& volume, std::size_t z, std::size_t n_slices) {
  if (n_slices % 2 == 0) throw ConfigError("n_slices must be odd, got " + std::to_string(n_slices));
  if (z >= volume.depth) throw ShapeError("slice index " + std::to_string(z) + " outside volume");
  const long k = static_cast<long>(n_slices - 1) / 2;
  const std::size_t plane = volume.slice_size();
  std::vector<float> data(n_slices * plane);
  for (long c = -k; c <= k; ++c) {
    const long src = std::clamp(static_cast<long>(z) + c, 0L, static_cast<long>(volume.depth) - 1);
    const auto s = volume.slice_view(static_cast<std::size_t>(src));
    std::copy(s.begin(), s.end(), data.begin() + (c + k) * plane);
  }
  return {Tensor::from_data({n_slices, volume.height, volume.width}, std::move(data)), z};
}

Tensor make_batch(const std::vector<SliceStack>& stacks) {
  if (stacks.empty()) throw ShapeError("empty batch");
  const auto& s0 = stacks.front().channels.shape();
  std::vector<float> data;
  data.reserve(stacks.size() * stacks.front().channels.numel());
  for (const auto& s : stacks) {
    if (s.channels.shape() != s0) throw ShapeError("slice stacks differ in shape");
    data.insert(data.end(), s.channels.data().begin(), s.channels.data().end());
  }
  return Tensor::from_data({stacks.size(), s0[0], s0[1], s0[2]}, std::move(data));
}

Tensor truncated_normal(const tensor::Shape& shape, double stddev, std::uint64_t seed) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<float> v(n);
  for (auto& x : v) {
    double s;
    do s = dist(rng);
    while (std::abs(s) > 2.0 * stddev);
    x = static_cast<float>(s);
  }
  return Tensor::from_data(shape, std::move(v), true);
}

Network::Network(NetworkConfig config) : config_(config) {
  config_.validate();
  std::uint64_t layer = 0;
  auto next_seed = [&] { return derive_seed(config_.seed, {layer++}); };
  const std::size_t nc = config_.n_c;

  std::size_t in = config_.n_slices;
  for (std::size_t s = 0; s < config_.n_p; ++s) {
    auto& stage = encoder_.emplace_back();
    for (std::size_t k = 0; k < nc; ++k) {
      stage.push_back(make_block("enc" + std::to_string(s) + ".conv" + std::to_string(k), in,
                                 config_.stage_width(s), next_seed()));
      in = config_.stage_width(s);
    }
  }
  for (std::size_t k = 0; k < nc; ++k) {
    bottleneck_.push_back(
        make_block("bottleneck.conv" + std::to_string(k), in, config_.stage_width(config_.n_p), next_seed()));
    in = config_.stage_width(config_.n_p);
  }
  decoder_.resize(config_.n_p);
  for (std::size_t s = config_.n_p; s-- > 0;) {
    if (config_.uses_concat()) in += config_.stage_width(s);
    for (std::size_t k = 0; k < nc; ++k) {
      decoder_[s].push_back(make_block("dec" + std::to_string(s) + ".conv" + std::to_string(k), in,
                                       config_.stage_width(s), next_seed()));
      in = config_.stage_width(s);
    }
  }
  final_weight_ = truncated_normal({1, in, 3, 3}, kInitStd, next_seed());
  final_bias_ = Tensor::zeros({1}, true);
}

Tensor Network::run_blocks(std::vector<ConvBlock>& blocks, Tensor x, Mode mode) {
  for (auto& b : blocks) {
    x = tensor::relu(tensor::batch_norm(tensor::conv2d_same(x, b.weight, Tensor()), b.gamma, b.beta, b.bn, mode));
  }
  return x;
}

Tensor Network::forward(const Tensor& input, Mode mode) {
  if (input.rank() != 4 || input.dim(1) != config_.n_slices) {
    throw ShapeError("network expects [N, " + std::to_string(config_.n_slices) + ", H, W], got " +
                     tensor::shape_string(input.shape()));
  }
  config_.validate_input(input.dim(2), input.dim(3));
  std::vector<Tensor> skips;
  Tensor x = input;
  for (auto& stage : encoder_) {
    x = run_blocks(stage, x, mode);
    skips.push_back(x);
    x = tensor::maxpool2x2(x);
  }
  x = run_blocks(bottleneck_, x, mode);
  for (std::size_t s = config_.n_p; s-- > 0;) {
    x = tensor::upsample_bilinear2x(x);
    if (config_.uses_concat()) x = tensor::concat_channels(x, skips[s]);
    x = run_blocks(decoder_[s], x, mode);
  }
  x = tensor::conv2d_same(x, final_weight_, final_bias_);
  if (config_.uses_residual()) {
    x = tensor::add(x, tensor::slice_channels(input, (config_.n_slices - 1) / 2, 1));
  }
  return x;
}

std::vector<NamedTensor> Network::parameters() const {
  std::vector<NamedTensor> out;
  auto add_blocks = [&](const std::vector<ConvBlock>& blocks) {
    for (const auto& b : blocks) {
      out.push_back({b.name + ".weight", b.weight});
      out.push_back({b.name + ".bn.gamma", b.gamma});
      out.push_back({b.name + ".bn.beta", b.beta});
    }
  };
  for (const auto& stage : encoder_) add_blocks(stage);
  add_blocks(bottleneck_);
  for (std::size_t s = config_.n_p; s-- > 0;) add_blocks(decoder_[s]);
  out.push_back({"final.weight", final_weight_});
  out.push_back({"final.bias", final_bias_});
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value.numel();
  return n;
}

std::vector<std::pair<std::string, tensor::BatchNormState<float>*>> Network::batch_norm_states() {
  std::vector<std::pair<std::string, tensor::BatchNormState<float>*>> out;
  auto add_blocks = [&](std::vector<ConvBlock>& blocks) {
    for (auto& b : blocks) out.emplace_back(b.name + ".bn", &b.bn);
  };
  for (auto& stage : encoder_) add_blocks(stage);
  add_blocks(bottleneck_);
  for (std::size_t s = config_.n_p; s-- > 0;) add_blocks(decoder_[s]);
  return out;
}

std::string Network::topology() const {
  std::ostringstream os;
  os << "skip=" << to_string(config_.skip_mode) << " n_p=" << config_.n_p << " n_c=" << config_.n_c
     << " base=" << config_.base_channels << " slices=" << config_.n_slices << '\n';
  for (const auto& p : parameters()) {
    if (p.value.rank() == 4) os << p.name << ' ' << p.value.dim(1) << " -> " << p.value.dim(0) << '\n';
  }
  if (config_.uses_residual()) os << "residual: + centre slice\n";
  return os.str();
}

void Network::zero_parameters() {
  for (auto& p : parameters()) {
    auto d = p.value.mutable_data();
    std::fill(d.begin(), d.end(), 0.0f);
  }
}

} // namespace petlab::net
