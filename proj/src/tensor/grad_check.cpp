#include "petlab/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "petlab/tensor/autograd.hpp"
#include "petlab/tensor/ops.hpp"

namespace petlab::tensor {

template <typename T>
BasicTensor<T> seeded_uniform(const Shape& shape, std::uint64_t seed, double lo, double hi,
                              double min_abs, bool requires_grad) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> data(numel_of(shape));
  for (auto& v : data) {
    double x = dist(rng);
    if (min_abs > 0.0 && std::abs(x) < min_abs) x = x < 0.0 ? -min_abs : min_abs;
    v = static_cast<T>(x);
  }
  return BasicTensor<T>::from_data(shape, std::move(data), requires_grad);
}

template <typename T>
BasicTensor<T> seeded_distinct(const Shape& shape, std::uint64_t seed, double spacing,
                               bool requires_grad) {
  std::vector<std::size_t> order(numel_of(shape));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const double offset = -0.5 * spacing * static_cast<double>(order.size());
  std::vector<T> data(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    data[i] = static_cast<T>(offset + spacing * static_cast<double>(order[i]));
  }
  return BasicTensor<T>::from_data(shape, std::move(data), requires_grad);
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_relative_error);
  return w;
}

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "pass" : "FAIL") << " (tol " << tolerance << ")";
  for (const auto& e : entries) {
    os << ' ' << e.input << '=' << std::scientific << std::setprecision(2) << e.max_relative_error;
  }
  return os.str();
}

namespace {

template <typename T>
double projected(const BasicTensor<T>& out, const std::vector<double>& weights) {
  double acc = 0.0;
  const auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) acc += weights[i] * static_cast<double>(d[i]);
  return acc;
}

} // namespace

template <typename T>
GradCheckReport grad_check(
    const std::function<BasicTensor<T>(const std::vector<BasicTensor<T>>&)>& op,
    std::vector<BasicTensor<T>> inputs, const std::vector<std::string>& names,
    const GradCheckOptions& options) {
  for (auto& in : inputs) in.set_requires_grad(true);

  auto out = op(inputs);
  std::vector<double> weights(out.numel());
  {
    std::mt19937_64 rng(options.projection_seed);
    std::uniform_real_distribution<double> dist(0.5, 1.5);
    for (auto& w : weights) w = dist(rng);
  }
  auto wt = BasicTensor<T>::from_data(out.shape(), std::vector<T>(weights.begin(), weights.end()));
  auto loss = sum(mul(out, wt));
  backward(loss);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& in = inputs[k];
    const std::vector<T> analytic(in.grad().begin(), in.grad().end());
    std::vector<double> numeric(in.numel());
    auto values = in.mutable_data();
    {
      NoGradGuard guard;
      for (std::size_t i = 0; i < values.size(); ++i) {
        const T saved = values[i];
        // The realised step differs from options.step after rounding to T.
        const T hi = static_cast<T>(saved + options.step);
        const T lo = static_cast<T>(saved - options.step);
        values[i] = hi;
        const double up = projected(op(inputs), weights);
        values[i] = lo;
        const double down = projected(op(inputs), weights);
        values[i] = saved;
        numeric[i] = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
      }
    }
    double scale = 0.0, err = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      scale = std::max({scale, std::abs(static_cast<double>(analytic[i])), std::abs(numeric[i])});
      err = std::max(err, std::abs(static_cast<double>(analytic[i]) - numeric[i]));
    }
    const double rel = scale > 0.0 ? err / scale : 0.0;
    report.entries.push_back({k < names.size() ? names[k] : "input" + std::to_string(k), rel});
  }
  report.passed = std::all_of(report.entries.begin(), report.entries.end(),
                              [&](const GradCheckEntry& e) {
                                return std::isfinite(e.max_relative_error) &&
                                       e.max_relative_error < options.tolerance;
                              });
  return report;
}

template Tensor seeded_uniform<float>(const Shape&, std::uint64_t, double, double, double, bool);
template Tensor64 seeded_uniform<double>(const Shape&, std::uint64_t, double, double, double, bool);
template Tensor seeded_distinct<float>(const Shape&, std::uint64_t, double, bool);
template Tensor64 seeded_distinct<double>(const Shape&, std::uint64_t, double, bool);
template GradCheckReport grad_check<float>(const std::function<Tensor(const std::vector<Tensor>&)>&,
                                           std::vector<Tensor>, const std::vector<std::string>&,
                                           const GradCheckOptions&);
template GradCheckReport grad_check<double>(
    const std::function<Tensor64(const std::vector<Tensor64>&)>&, std::vector<Tensor64>,
    const std::vector<std::string>&, const GradCheckOptions&);

} // namespace petlab::tensor
