#include "petlab/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

namespace petlab::tensor {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
void require_rank4(const BasicTensor<T>& t, const char* op) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(op) + " expects an NCHW tensor, got " + shape_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename T>
detail::Node<T>& parent(detail::Node<T>& self, std::size_t i) {
  return *self.parents[i];
}

// cols[(c*9 + ky*3 + kx), y*W + x] = in[c, y+ky-1, x+kx-1] (zero outside)
template <typename T>
void im2col3x3(const T* in, std::size_t channels, std::size_t h, std::size_t w, T* cols) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = in + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = cols + ((c * 3 + ky) * 3 + kx) * hw;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          T* dst = row + y * w;
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          const T* src = plane + sy * w;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          if (x0 > 0) dst[0] = T(0);
          if (x1 < w) dst[w - 1] = T(0);
          for (std::size_t x = x0; x < x1; ++x) dst[x] = src[x + dx];
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* cols, std::size_t channels, std::size_t h, std::size_t w, T* out) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = out + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = cols + ((c * 3 + ky) * 3 + kx) * hw;
        const int dy = ky - 1;
        const int dx = kx - 1;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const T* src = row + y * w;
          T* dst = plane + sy * w;
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          for (std::size_t x = x0; x < x1; ++x) dst[x + dx] += src[x];
        }
      }
    }
  }
}

struct Interp {
  std::size_t lo, hi;
  double w_lo, w_hi;
};

std::vector<Interp> upsample_table(std::size_t in) {
  std::vector<Interp> table(2 * in);
  for (std::size_t i = 0; i < 2 * in; ++i) {
    double src = (static_cast<double>(i) + 0.5) / 2.0 - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const auto hi = std::min(lo + 1, in - 1);
    const double frac = src - static_cast<double>(lo);
    table[i] = {lo, hi, 1.0 - frac, frac};
  }
  return table;
}

template <typename T, typename Fwd, typename Bwd>
BasicTensor<T> unary(const BasicTensor<T>& x, std::string_view name, Fwd fwd, Bwd bwd) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_op_result<T>(x.shape(), std::move(out), name, {x}, [bwd](detail::Node<T>& self) {
    auto& p = parent(self, 0);
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += bwd(p.data[i], self.data[i], self.grad[i]);
  });
}

} // namespace

template <typename T>
BasicTensor<T> conv2d_same(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                           const BasicTensor<T>& bias) {
  require_rank4(input, "conv2d_same");
  if (weight.rank() != 4 || weight.dim(2) != 3 || weight.dim(3) != 3) {
    throw ShapeError("conv2d_same expects a (F,C,3,3) kernel, got " + shape_string(weight.shape()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f = weight.dim(0);
  if (weight.dim(1) != c) {
    throw ShapeError("conv2d_same channel mismatch: input has " + std::to_string(c) +
                     " channels, kernel expects " + std::to_string(weight.dim(1)));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != f)) {
    throw ShapeError("conv2d_same bias shape " + shape_string(bias.shape()) + " does not match " +
                     std::to_string(f) + " filters");
  }
  const std::size_t hw = h * w, k = c * 9;
  std::vector<T> out(n * f * hw);
  std::vector<T> cols(k * hw);
  ConstMatMap<T> wmat(weight.data().data(), f, k);
  for (std::size_t s = 0; s < n; ++s) {
    im2col3x3(input.data().data() + s * c * hw, c, h, w, cols.data());
    MatMap<T> o(out.data() + s * f * hw, f, hw);
    o.noalias() = wmat * ConstMatMap<T>(cols.data(), k, hw);
    if (has_bias) {
      for (std::size_t j = 0; j < f; ++j) o.row(j).array() += bias[j];
    }
  }
  std::vector<BasicTensor<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op_result<T>(
      {n, f, h, w}, std::move(out), "conv2d_same", std::move(inputs),
      [n, c, h, w, f, hw, k, has_bias](detail::Node<T>& self) {
        auto& x = parent(self, 0);
        auto& wt = parent(self, 1);
        std::vector<T> cols(k * hw);
        std::vector<T> dcols(x.requires_grad ? k * hw : 0);
        for (std::size_t s = 0; s < n; ++s) {
          ConstMatMap<T> dout(self.grad.data() + s * f * hw, f, hw);
          if (wt.requires_grad) {
            im2col3x3(x.data.data() + s * c * hw, c, h, w, cols.data());
            MatMap<T> dw(wt.ensure_grad().data(), f, k);
            dw.noalias() += dout * ConstMatMap<T>(cols.data(), k, hw).transpose();
          }
          if (x.requires_grad) {
            MatMap<T> dc(dcols.data(), k, hw);
            dc.noalias() = ConstMatMap<T>(wt.data.data(), f, k).transpose() * dout;
            col2im3x3(dcols.data(), c, h, w, x.ensure_grad().data() + s * c * hw);
          }
        }
        if (has_bias) {
          auto& b = parent(self, 2);
          if (b.requires_grad) {
            auto& db = b.ensure_grad();
            for (std::size_t j = 0; j < f; ++j) {
              double acc = 0.0;
              for (std::size_t s = 0; s < n; ++s) {
                const T* g = self.grad.data() + (s * f + j) * hw;
                for (std::size_t i = 0; i < hw; ++i) acc += g[i];
              }
              db[j] += static_cast<T>(acc);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, BatchNormState<T>& state, Mode mode,
                          double epsilon) {
  require_rank4(input, "batch_norm");
  if (!(epsilon > 0.0)) throw ContractError("batch_norm epsilon must be positive");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("batch_norm affine parameters must have " + std::to_string(c) + " entries");
  }
  if (state.running_mean.size() != c || state.running_var.size() != c) {
    throw ShapeError("batch_norm running statistics sized for " +
                     std::to_string(state.running_mean.size()) + " channels, input has " +
                     std::to_string(c));
  }
  if (mode == Mode::eval && !state.initialized) {
    throw StateError("batch_norm in eval mode before running statistics were populated");
  }
  const double count = static_cast<double>(n * hw);
  const auto x = input.data();
  std::vector<double> mean(c), inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const double m = s / count;
      double v = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = p[i] - m;
          v += d * d;
        }
      }
      v /= count;
      mean[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(v + epsilon);
      if (state.initialized) {
        state.running_mean[ch] = static_cast<T>(state.momentum * state.running_mean[ch] +
                                                (1.0 - state.momentum) * m);
        state.running_var[ch] = static_cast<T>(state.momentum * state.running_var[ch] +
                                               (1.0 - state.momentum) * v);
      } else {
        state.running_mean[ch] = static_cast<T>(m);
        state.running_var[ch] = static_cast<T>(v);
      }
    } else {
      mean[ch] = state.running_mean[ch];
      inv_std[ch] = 1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) + epsilon);
    }
  }
  if (mode == Mode::train) state.initialized = true;

  std::vector<T> out(x.size());
  std::vector<T> xhat(x.size());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * hw;
      const double g = gamma[ch], bt = beta[ch];
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (x[off + i] - mean[ch]) * inv_std[ch];
        xhat[off + i] = static_cast<T>(xh);
        out[off + i] = static_cast<T>(g * xh + bt);
      }
    }
  }
  return make_op_result<T>(
      input.shape(), std::move(out), "batch_norm", {input, gamma, beta},
      [n, c, hw, count, mode, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](detail::Node<T>& self) {
        auto& xin = parent(self, 0);
        auto& gm = parent(self, 1);
        auto& bt = parent(self, 2);
        const auto& dy = self.grad;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_dy += dy[off + i];
              sum_dy_xhat += static_cast<double>(dy[off + i]) * xhat[off + i];
            }
          }
          if (gm.requires_grad) gm.ensure_grad()[ch] += static_cast<T>(sum_dy_xhat);
          if (bt.requires_grad) bt.ensure_grad()[ch] += static_cast<T>(sum_dy);
          if (!xin.requires_grad) continue;
          auto& dx = xin.ensure_grad();
          const double g = gm.data[ch];
          const double k = g * inv_std[ch];
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              if (mode == Mode::train) {
                dx[off + i] += static_cast<T>(
                    k * (dy[off + i] - sum_dy / count - xhat[off + i] * sum_dy_xhat / count));
              } else {
                dx[off + i] += static_cast<T>(k * dy[off + i]);
              }
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  return unary(
      input, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T x, T, T g) { return x > T(0) ? g : T(0); });
}

template <typename T>
BasicTensor<T> maxpool2x2(const BasicTensor<T>& input) {
  require_rank4(input, "maxpool2x2");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2x2 needs even spatial size, got " + shape_string(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  const auto x = input.data();
  std::vector<T> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* plane = x.data() + p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        std::size_t best = (2 * y) * w + 2 * xo;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (auto idx : cand) {
          if (plane[idx] > plane[best]) best = idx;
        }
        const std::size_t o = p * oh * ow + y * ow + xo;
        out[o] = plane[best];
        argmax[o] = p * h * w + best;
      }
    }
  }
  return make_op_result<T>({n, c, oh, ow}, std::move(out), "maxpool2x2", {input},
                           [argmax = std::move(argmax)](detail::Node<T>& self) {
                             auto& p = parent(self, 0);
                             if (!p.requires_grad) return;
                             auto& g = p.ensure_grad();
                             for (std::size_t i = 0; i < argmax.size(); ++i) {
                               g[argmax[i]] += self.grad[i];
                             }
                           });
}

template <typename T>
BasicTensor<T> upsample_bilinear2x(const BasicTensor<T>& input) {
  require_rank4(input, "upsample_bilinear2x");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = 2 * h, ow = 2 * w;
  const auto ty = upsample_table(h);
  const auto tx = upsample_table(w);
  const auto x = input.data();
  std::vector<T> out(n * c * oh * ow);
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const auto& iy = ty[y];
      const T* r0 = src + iy.lo * w;
      const T* r1 = src + iy.hi * w;
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const auto& ix = tx[xo];
        const double top = ix.w_lo * r0[ix.lo] + ix.w_hi * r0[ix.hi];
        const double bot = ix.w_lo * r1[ix.lo] + ix.w_hi * r1[ix.hi];
        dst[y * ow + xo] = static_cast<T>(iy.w_lo * top + iy.w_hi * bot);
      }
    }
  }
  return make_op_result<T>(
      {n, c, oh, ow}, std::move(out), "upsample_bilinear2x", {input},
      [n, c, h, w, oh, ow, ty, tx](detail::Node<T>& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        for (std::size_t pl = 0; pl < n * c; ++pl) {
          T* dst = g.data() + pl * h * w;
          const T* src = self.grad.data() + pl * oh * ow;
          for (std::size_t y = 0; y < oh; ++y) {
            const auto& iy = ty[y];
            for (std::size_t xo = 0; xo < ow; ++xo) {
              const auto& ix = tx[xo];
              const double v = src[y * ow + xo];
              dst[iy.lo * w + ix.lo] += static_cast<T>(iy.w_lo * ix.w_lo * v);
              dst[iy.lo * w + ix.hi] += static_cast<T>(iy.w_lo * ix.w_hi * v);
              dst[iy.hi * w + ix.lo] += static_cast<T>(iy.w_hi * ix.w_lo * v);
              dst[iy.hi * w + ix.hi] += static_cast<T>(iy.w_hi * ix.w_hi * v);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> avgpool2x2(const BasicTensor<T>& input) {
  require_rank4(input, "avgpool2x2");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw ShapeError("avgpool2x2 input too small: " + shape_string(input.shape()));
  const auto x = input.data();
  std::vector<T> out(n * c * oh * ow);
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = x.data() + p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const std::size_t i = 2 * y * w + 2 * xo;
        const double s = static_cast<double>(src[i]) + src[i + 1] + src[i + w] + src[i + w + 1];
        out[p * oh * ow + y * ow + xo] = static_cast<T>(0.25 * s);
      }
    }
  }
  return make_op_result<T>({n, c, oh, ow}, std::move(out), "avgpool2x2", {input},
                           [n, c, h, w, oh, ow](detail::Node<T>& self) {
                             auto& p = parent(self, 0);
                             if (!p.requires_grad) return;
                             auto& g = p.ensure_grad();
                             for (std::size_t pl = 0; pl < n * c; ++pl) {
                               T* dst = g.data() + pl * h * w;
                               const T* src = self.grad.data() + pl * oh * ow;
                               for (std::size_t y = 0; y < oh; ++y) {
                                 for (std::size_t xo = 0; xo < ow; ++xo) {
                                   const T v = T(0.25) * src[y * ow + xo];
                                   const std::size_t i = 2 * y * w + 2 * xo;
                                   dst[i] += v;
                                   dst[i + 1] += v;
                                   dst[i + w] += v;
                                   dst[i + w + 1] += v;
                                 }
                               }
                             }
                           });
}

template <typename T>
BasicTensor<T> separable_filter_valid(const BasicTensor<T>& input, std::span<const double> kernel) {
  require_rank4(input, "separable_filter_valid");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t k = kernel.size();
  if (k == 0 || h < k || w < k) {
    throw ShapeError("separable_filter_valid: image " + shape_string(input.shape()) +
                     " smaller than window " + std::to_string(k));
  }
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> taps(kernel.begin(), kernel.end());
  const auto x = input.data();
  std::vector<T> out(n * c * oh * ow);
  std::vector<double> tmp(h * ow);
  for (std::size_t p = 0; p < n * c; ++p) {
    const T* src = x.data() + p * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += taps[j] * src[y * w + xo + j];
        tmp[y * ow + xo] = acc;
      }
    }
    T* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += taps[j] * tmp[(y + j) * ow + xo];
        dst[y * ow + xo] = static_cast<T>(acc);
      }
    }
  }
  return make_op_result<T>(
      {n, c, oh, ow}, std::move(out), "separable_filter_valid", {input},
      [n, c, h, w, k, oh, ow, taps = std::move(taps)](detail::Node<T>& self) {
        auto& p = parent(self, 0);
        if (!p.requires_grad) return;
        auto& g = p.ensure_grad();
        std::vector<double> tmp(h * ow);
        for (std::size_t pl = 0; pl < n * c; ++pl) {
          std::fill(tmp.begin(), tmp.end(), 0.0);
          const T* src = self.grad.data() + pl * oh * ow;
          for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xo = 0; xo < ow; ++xo) {
              const double v = src[y * ow + xo];
              for (std::size_t j = 0; j < k; ++j) tmp[(y + j) * ow + xo] += taps[j] * v;
            }
          }
          T* dst = g.data() + pl * h * w;
          for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xo = 0; xo < ow; ++xo) {
              const double v = tmp[y * ow + xo];
              for (std::size_t j = 0; j < k; ++j) dst[y * w + xo + j] += static_cast<T>(taps[j] * v);
            }
          }
        }
      });
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  std::vector<T> out(n * (ca + cb) * hw);
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(a.data().data() + s * ca * hw, ca * hw, out.data() + s * (ca + cb) * hw);
    std::copy_n(b.data().data() + s * cb * hw, cb * hw, out.data() + (s * (ca + cb) + ca) * hw);
  }
  return make_op_result<T>({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), "concat_channels",
                           {a, b}, [n, ca, cb, hw](detail::Node<T>& self) {
                             auto& pa = parent(self, 0);
                             auto& pb = parent(self, 1);
                             for (std::size_t s = 0; s < n; ++s) {
                               const T* g = self.grad.data() + s * (ca + cb) * hw;
                               if (pa.requires_grad) {
                                 T* d = pa.ensure_grad().data() + s * ca * hw;
                                 for (std::size_t i = 0; i < ca * hw; ++i) d[i] += g[i];
                               }
                               if (pb.requires_grad) {
                                 T* d = pb.ensure_grad().data() + s * cb * hw;
                                 for (std::size_t i = 0; i < cb * hw; ++i) d[i] += g[ca * hw + i];
                               }
                             }
                           });
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t start, std::size_t count) {
  require_rank4(input, "slice_channels");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (count == 0 || start + count > c) {
    throw ShapeError("slice_channels: range [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") outside " + std::to_string(c) + " channels");
  }
  std::vector<T> out(n * count * hw);
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(input.data().data() + (s * c + start) * hw, count * hw, out.data() + s * count * hw);
  }
  return make_op_result<T>({n, count, input.dim(2), input.dim(3)}, std::move(out), "slice_channels",
                           {input}, [n, c, hw, start, count](detail::Node<T>& self) {
                             auto& p = parent(self, 0);
                             if (!p.requires_grad) return;
                             auto& g = p.ensure_grad();
                             for (std::size_t s = 0; s < n; ++s) {
                               T* d = g.data() + (s * c + start) * hw;
                               const T* src = self.grad.data() + s * count * hw;
                               for (std::size_t i = 0; i < count * hw; ++i) d[i] += src[i];
                             }
                           });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op_result<T>(a.shape(), std::move(out), "add", {a, b}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = parent(self, k);
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op_result<T>(a.shape(), std::move(out), "sub", {a, b}, [](detail::Node<T>& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op_result<T>(a.shape(), std::move(out), "mul", {a, b}, [](detail::Node<T>& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

template <typename T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "div");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  return make_op_result<T>(a.shape(), std::move(out), "div", {a, b}, [](detail::Node<T>& self) {
    auto& pa = parent(self, 0);
    auto& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i] * self.data[i] / pb.data[i];
    }
  });
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& input) {
  return unary(
      input, "abs", [](T v) { return v < T(0) ? -v : v; },
      [](T x, T, T g) { return x > T(0) ? g : (x < T(0) ? -g : T(0)); });
}

template <typename T>
BasicTensor<T> square(const BasicTensor<T>& input) {
  return unary(
      input, "square", [](T v) { return v * v; }, [](T x, T, T g) { return T(2) * x * g; });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& input, double factor) {
  const T f = static_cast<T>(factor);
  return unary(
      input, "scale", [f](T v) { return f * v; }, [f](T, T, T g) { return f * g; });
}

template <typename T>
BasicTensor<T> add_scalar(const BasicTensor<T>& input, double value) {
  const T c = static_cast<T>(value);
  return unary(
      input, "add_scalar", [c](T v) { return v + c; }, [](T, T, T g) { return g; });
}

template <typename T>
BasicTensor<T> clamp_min(const BasicTensor<T>& input, double floor) {
  const T lo = static_cast<T>(floor);
  return unary(
      input, "clamp_min", [lo](T v) { return v > lo ? v : lo; },
      [lo](T x, T, T g) { return x > lo ? g : T(0); });
}

template <typename T>
BasicTensor<T> pow_scalar(const BasicTensor<T>& input, double exponent) {
  for (auto v : input.data()) {
    if (!(v > T(0))) throw DataError("pow_scalar requires strictly positive input");
  }
  return unary(
      input, "pow_scalar",
      [exponent](T v) { return static_cast<T>(std::pow(static_cast<double>(v), exponent)); },
      [exponent](T x, T y, T g) { return static_cast<T>(g * exponent * (static_cast<double>(y) / x)); });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& input) {
  double acc = 0.0;
  for (auto v : input.data()) acc += v;
  return make_op_result<T>({}, std::vector<T>{static_cast<T>(acc)}, "sum", {input},
                           [](detail::Node<T>& self) {
                             auto& p = parent(self, 0);
                             if (!p.requires_grad) return;
                             auto& g = p.ensure_grad();
                             for (auto& v : g) v += self.grad[0];
                           });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& input) {
  double acc = 0.0;
  for (auto v : input.data()) acc += v;
  const double count = static_cast<double>(input.numel());
  return make_op_result<T>({}, std::vector<T>{static_cast<T>(acc / count)}, "mean", {input},
                           [count](detail::Node<T>& self) {
                             auto& p = parent(self, 0);
                             if (!p.requires_grad) return;
                             auto& g = p.ensure_grad();
                             const T d = static_cast<T>(self.grad[0] / count);
                             for (auto& v : g) v += d;
                           });
}

template <typename T>
BasicTensor<T> mean_per_sample(const BasicTensor<T>& input) {
  if (input.rank() < 1) throw ShapeError("mean_per_sample needs rank >= 1");
  const std::size_t n = input.dim(0);
  const std::size_t per = input.numel() / n;
  std::vector<T> out(n);
  for (std::size_t s = 0; s < n; ++s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) acc += input[s * per + i];
    out[s] = static_cast<T>(acc / static_cast<double>(per));
  }
  return make_op_result<T>({n}, std::move(out), "mean_per_sample", {input},
                           [n, per](detail::Node<T>& self) {
                             auto& p = parent(self, 0);
                             if (!p.requires_grad) return;
                             auto& g = p.ensure_grad();
                             for (std::size_t s = 0; s < n; ++s) {
                               const T d = static_cast<T>(self.grad[s] / static_cast<double>(per));
                               for (std::size_t i = 0; i < per; ++i) g[s * per + i] += d;
                             }
                           });
}

#define PETLAB_INSTANTIATE_OPS(T)                                                               \
  template BasicTensor<T> conv2d_same(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                      const BasicTensor<T>&);                                   \
  template BasicTensor<T> batch_norm(const BasicTensor<T>&, const BasicTensor<T>&,              \
                                     const BasicTensor<T>&, BatchNormState<T>&, Mode, double);  \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                          \
  template BasicTensor<T> maxpool2x2(const BasicTensor<T>&);                                    \
  template BasicTensor<T> upsample_bilinear2x(const BasicTensor<T>&);                           \
  template BasicTensor<T> avgpool2x2(const BasicTensor<T>&);                                    \
  template BasicTensor<T> separable_filter_valid(const BasicTensor<T>&, std::span<const double>); \
  template BasicTensor<T> concat_channels(const BasicTensor<T>&, const BasicTensor<T>&);        \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);      \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> div(const BasicTensor<T>&, const BasicTensor<T>&);                    \
  template BasicTensor<T> abs(const BasicTensor<T>&);                                           \
  template BasicTensor<T> square(const BasicTensor<T>&);                                        \
  template BasicTensor<T> scale(const BasicTensor<T>&, double);                                 \
  template BasicTensor<T> add_scalar(const BasicTensor<T>&, double);                            \
  template BasicTensor<T> clamp_min(const BasicTensor<T>&, double);                             \
  template BasicTensor<T> pow_scalar(const BasicTensor<T>&, double);                            \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                           \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                          \
  template BasicTensor<T> mean_per_sample(const BasicTensor<T>&);

PETLAB_INSTANTIATE_OPS(float)
PETLAB_INSTANTIATE_OPS(double)

#undef PETLAB_INSTANTIATE_OPS

} // namespace petlab::tensor
