#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "petlab/image.hpp"
#include "petlab/tensor/ops.hpp"
#include "petlab/tensor/tensor.hpp"

namespace petlab::net {

enum class SkipMode { both, concat_only, residual_only, none };

SkipMode parse_skip_mode(const std::string& name);
std::string to_string(SkipMode mode);

struct NetworkConfig {
  std::size_t n_p = 3;           // pooling stages
  std::size_t n_c = 2;           // conv blocks per stage
  std::size_t base_channels = 16;
  std::size_t n_slices = 3;
  SkipMode skip_mode = SkipMode::both;
  std::uint64_t seed = 0;

  void validate() const;
  /// Throws ConfigError unless H and W are divisible by 2^n_p.
  void validate_input(std::size_t height, std::size_t width) const;
  bool uses_concat() const { return skip_mode == SkipMode::both || skip_mode == SkipMode::concat_only; }
  bool uses_residual() const { return skip_mode == SkipMode::both || skip_mode == SkipMode::residual_only; }
  std::size_t stage_width(std::size_t stage) const { return base_channels << stage; }
};

/// Input channels z-k .. z+k of a volume, k = (n_slices - 1) / 2, with
/// out-of-range slices replaced by the nearest valid one.
struct SliceStack {
  tensor::Tensor channels; // [n_slices, H, W]
  std::size_t center_index = 0;
};

SliceStack stack_slices(const Volume& volume, std::size_t z, std::size_t n_slices);

/// Stacks SliceStacks into an [N, n_slices, H, W] batch.
tensor::Tensor make_batch(const std::vector<SliceStack>& stacks);

struct NamedTensor {
  std::string name;
  tensor::Tensor value;
};

/// conv3x3 -> batch norm -> relu. The convolution has no bias: batch norm
/// removes any per-channel offset.
struct ConvBlock {
  std::string name;
  tensor::Tensor weight;
  tensor::Tensor gamma;
  tensor::Tensor beta;
  tensor::BatchNormState<float> bn;
};

class Network {
public:
  explicit Network(NetworkConfig config);

  const NetworkConfig& config() const { return config_; }

  /// [N, n_slices, H, W] -> [N, 1, H, W].
  tensor::Tensor forward(const tensor::Tensor& input, tensor::Mode mode);

  /// Trainable tensors in a fixed order; handles share storage with the net.
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;

  /// Running statistics, in the same block order as parameters().
  std::vector<std::pair<std::string, tensor::BatchNormState<float>*>> batch_norm_states();

  /// One line per layer: name, input and output widths.
  std::string topology() const;

  /// Sets every parameter to zero (used for identity checks).
  void zero_parameters();

private:
  tensor::Tensor run_blocks(std::vector<ConvBlock>& blocks, tensor::Tensor x, tensor::Mode mode);

  NetworkConfig config_;
  std::vector<std::vector<ConvBlock>> encoder_;
  std::vector<ConvBlock> bottleneck_;
  std::vector<std::vector<ConvBlock>> decoder_; // decoder_[s] mirrors encoder_[s]
  tensor::Tensor final_weight_;
  tensor::Tensor final_bias_;
};

/// Truncated normal (zero mean, +-2 std), seeded.
tensor::Tensor truncated_normal(const tensor::Shape& shape, double stddev, std::uint64_t seed);

} // namespace petlab::net
