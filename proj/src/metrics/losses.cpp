#include "petlab/metrics/losses.hpp"

#include <cmath>
#include <numeric>

#include "petlab/tensor/ops.hpp"

namespace petlab::metrics {

using tensor::BasicTensor;
namespace ops = petlab::tensor;

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double c = 0.5 * (static_cast<double>(size) - 1.0);
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= s;
  return w;
}

SSIMParams SSIMParams::for_dynamic_range(double dynamic_range, std::size_t levels) {
  if (!(dynamic_range > 0.0)) throw ConfigError("SSIM dynamic range must be positive");
  if (levels == 0) throw ConfigError("SSIM needs at least one level");
  SSIMParams p;
  p.c1 = std::pow(0.01 * dynamic_range, 2);
  p.c2 = std::pow(0.03 * dynamic_range, 2);
  p.window = gaussian_window(11, 1.5);
  p.levels = levels;
  p.level_weights.assign(levels, 1.0 / static_cast<double>(levels));
  return p;
}

void SSIMParams::validate() const {
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("SSIM constants C1, C2 must be positive");
  if (window.empty()) throw ConfigError("SSIM window is empty");
  if (std::abs(std::accumulate(window.begin(), window.end(), 0.0) - 1.0) > 1e-9) {
    throw ConfigError("SSIM window must sum to 1");
  }
  if (levels == 0 || level_weights.size() != levels) throw ConfigError("SSIM level weights must have K entries");
  if (std::abs(std::accumulate(level_weights.begin(), level_weights.end(), 0.0) - 1.0) > 1e-9) {
    throw ConfigError("SSIM level weights must sum to 1");
  }
}

std::size_t SSIMParams::min_image_size() const { return window.size() << (levels - 1); }

LossKind parse_loss_kind(const std::string& name) {
  if (name == "l1") return LossKind::l1;
  if (name == "mse") return LossKind::mse;
  if (name == "ssim") return LossKind::ssim;
  if (name == "msssim") return LossKind::msssim;
  throw ConfigError("unknown loss '" + name + "' (expected l1, mse, ssim or msssim)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::l1: return "l1";
    case LossKind::mse: return "mse";
    case LossKind::ssim: return "ssim";
    case LossKind::msssim: return "msssim";
  }
  return "?";
}

template <typename T>
BasicTensor<T> l1_loss(const BasicTensor<T>& x, const BasicTensor<T>& y) {
  return ops::mean(ops::abs(ops::sub(x, y)));
}

template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& x, const BasicTensor<T>& y) {
  return ops::mean(ops::square(ops::sub(x, y)));
}

template <typename T>
SSIMMaps<T> ssim_maps(const BasicTensor<T>& x, const BasicTensor<T>& y, const SSIMParams& params) {
  params.validate();
  if (x.shape() != y.shape()) {
    throw ShapeError("SSIM inputs differ in shape: " + tensor::shape_string(x.shape()) + " vs " +
                     tensor::shape_string(y.shape()));
  }
  if (x.rank() != 4) throw ShapeError("SSIM expects NCHW batches");
  if (x.dim(2) < params.window.size() || x.dim(3) < params.window.size()) {
    throw ConfigError("image " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                      " is smaller than the SSIM window " + std::to_string(params.window.size()));
  }
  const std::span<const double> win(params.window);
  auto mu_x = ops::separable_filter_valid(x, win);
  auto mu_y = ops::separable_filter_valid(y, win);
  auto mu_xx = ops::mul(mu_x, mu_x);
  auto mu_yy = ops::mul(mu_y, mu_y);
  auto mu_xy = ops::mul(mu_x, mu_y);
  auto var_x = ops::sub(ops::separable_filter_valid(ops::mul(x, x), win), mu_xx);
  auto var_y = ops::sub(ops::separable_filter_valid(ops::mul(y, y), win), mu_yy);
  auto cov = ops::sub(ops::separable_filter_valid(ops::mul(x, y), win), mu_xy);

  auto lum = ops::div(ops::add_scalar(ops::scale(mu_xy, 2.0), params.c1),
                      ops::add_scalar(ops::add(mu_xx, mu_yy), params.c1));
  auto cs = ops::div(ops::add_scalar(ops::scale(cov, 2.0), params.c2),
                     ops::add_scalar(ops::add(var_x, var_y), params.c2));
  return {lum, cs};
}

template <typename T>
BasicTensor<T> ssim_loss(const BasicTensor<T>& x, const BasicTensor<T>& y, const SSIMParams& params) {
  auto maps = ssim_maps(x, y, params);
  return ops::add_scalar(ops::scale(ops::mean(ops::mul(maps.luminance, maps.contrast_structure)), -1.0), 1.0);
}

namespace {

// Means below this are clamped before a fractional power.
constexpr double kMsssimFloor = 1e-6;

template <typename T>
BasicTensor<T> weighted_level(const BasicTensor<T>& per_image_mean, double weight) {
  if (weight == 1.0) return per_image_mean;
  return ops::pow_scalar(ops::clamp_min(per_image_mean, kMsssimFloor), weight);
}

} // namespace

template <typename T>
BasicTensor<T> msssim(const BasicTensor<T>& x, const BasicTensor<T>& y, const SSIMParams& params) {
  params.validate();
  if (x.rank() != 4) throw ShapeError("MS-SSIM expects NCHW batches");
  if (std::min(x.dim(2), x.dim(3)) < params.min_image_size()) {
    throw ConfigError("MS-SSIM with " + std::to_string(params.levels) + " levels needs images of at least " +
                      std::to_string(params.min_image_size()) + " pixels per side");
  }
  BasicTensor<T> xs = x, ys = y, result;
  for (std::size_t k = 0; k < params.levels; ++k) {
    auto maps = ssim_maps(xs, ys, params);
    const bool last = k + 1 == params.levels;
    auto term = last ? ops::mean_per_sample(ops::mul(maps.luminance, maps.contrast_structure))
                     : ops::mean_per_sample(maps.contrast_structure);
    term = weighted_level(term, params.level_weights[k]);
    result = k == 0 ? term : ops::mul(result, term);
    if (!last) {
      xs = ops::avgpool2x2(xs);
      ys = ops::avgpool2x2(ys);
    }
  }
  return result;
}

template <typename T>
BasicTensor<T> msssim_loss(const BasicTensor<T>& x, const BasicTensor<T>& y, const SSIMParams& params) {
  return ops::add_scalar(ops::scale(ops::mean(msssim(x, y, params)), -1.0), 1.0);
}

template <typename T>
BasicTensor<T> loss(LossKind kind, const BasicTensor<T>& x, const BasicTensor<T>& y, const SSIMParams& params) {
  if (x.shape() != y.shape()) {
    throw ShapeError("loss inputs differ in shape: " + tensor::shape_string(x.shape()) + " vs " +
                     tensor::shape_string(y.shape()));
  }
  switch (kind) {
    case LossKind::l1: return l1_loss(x, y);
    case LossKind::mse: return mse_loss(x, y);
    case LossKind::ssim: return ssim_loss(x, y, params);
    case LossKind::msssim: return msssim_loss(x, y, params);
  }
  throw ConfigError("unknown loss kind");
}

double ssim_index(const tensor::Tensor64& x, const tensor::Tensor64& y, const SSIMParams& params) {
  tensor::NoGradGuard guard;
  auto maps = ssim_maps(x, y, params);
  return ops::mean(ops::mul(maps.luminance, maps.contrast_structure)).item();
}

#define PETLAB_INSTANTIATE_LOSSES(T)                                                                   \
  template BasicTensor<T> l1_loss(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template BasicTensor<T> mse_loss(const BasicTensor<T>&, const BasicTensor<T>&);                      \
  template SSIMMaps<T> ssim_maps(const BasicTensor<T>&, const BasicTensor<T>&, const SSIMParams&);     \
  template BasicTensor<T> ssim_loss(const BasicTensor<T>&, const BasicTensor<T>&, const SSIMParams&);  \
  template BasicTensor<T> msssim(const BasicTensor<T>&, const BasicTensor<T>&, const SSIMParams&);     \
  template BasicTensor<T> msssim_loss(const BasicTensor<T>&, const BasicTensor<T>&, const SSIMParams&); \
  template BasicTensor<T> loss(LossKind, const BasicTensor<T>&, const BasicTensor<T>&, const SSIMParams&);

PETLAB_INSTANTIATE_LOSSES(float)
PETLAB_INSTANTIATE_LOSSES(double)

#undef PETLAB_INSTANTIATE_LOSSES

} // namespace petlab::metrics
