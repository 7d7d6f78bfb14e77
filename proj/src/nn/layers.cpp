#include "gw/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <type_traits>

#include "gw/simd/kernels.hpp"
#include "gw/simd/reference.hpp"

namespace gw::nn {
namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

int ceil_div(int a, int b) { return -floor_div(-a, b); }

// Valid output range [lo, hi) for which o * stride + base lies in [0, size).
std::pair<int, int> valid_range(int base, int stride, int size, int out) {
  const int lo = std::clamp(ceil_div(-base, stride), 0, out);
  const int hi = std::clamp(floor_div(size - 1 - base, stride) + 1, lo, out);
  return {lo, hi};
}

template <typename T>
std::vector<T> to_channel_major(const Tensor4<T>& x) {
  const std::size_t p = x.shape().plane();
  const std::size_t np = static_cast<std::size_t>(x.n()) * p;
  std::vector<T> out(x.size());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      std::copy_n(x.data() + x.offset(n, c, 0, 0), p, out.data() + c * np + n * p);
    }
  }
  return out;
}

template <typename T>
void from_channel_major(const std::vector<T>& mat, Tensor4<T>& x) {
  const std::size_t p = x.shape().plane();
  const std::size_t np = static_cast<std::size_t>(x.n()) * p;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      std::copy_n(mat.data() + c * np + n * p, p, x.data() + x.offset(n, c, 0, 0));
    }
  }
}

template <typename T>
void add_bias(Tensor4<T>& y, const Param<T>& bias) {
  const std::size_t p = y.shape().plane();
  for (int n = 0; n < y.n(); ++n) {
    for (int c = 0; c < y.c(); ++c) {
      T* row = y.data() + y.offset(n, c, 0, 0);
      const T b = bias.value[c];
      for (std::size_t i = 0; i < p; ++i) row[i] += b;
    }
  }
}

template <typename T>
void accumulate_bias_grad(const Tensor4<T>& dy, Param<T>& bias) {
  const std::size_t p = dy.shape().plane();
  for (int c = 0; c < dy.c(); ++c) {
    double s = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      const T* row = dy.data() + dy.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < p; ++i) s += row[i];
    }
    bias.grad[c] += static_cast<T>(s);
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

int conv_out_size(int in, int kernel, int stride, int pad) {
  const int span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

template <typename T>
void gemm(bool ta, bool tb, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc) {
  if constexpr (std::is_same_v<T, float>) {
    simd::active().gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  } else {
    simd::ref::gemm<T>(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  }
}

template <typename T>
void im2col(const Tensor4<T>& x, const ConvGeometry& g, std::vector<T>& col) {
  const int nb = x.n(), ch = x.c(), hh = x.h(), ww = x.w();
  const std::size_t p = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t cols = nb * p;
  col.resize(static_cast<std::size_t>(ch) * g.kernel_h * g.kernel_w * cols);
  for (int c = 0; c < ch; ++c) {
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      const auto [oy_lo, oy_hi] = valid_range(g.offset_y + ky, g.stride, hh, g.out_h);
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const auto [ox_lo, ox_hi] = valid_range(g.offset_x + kx, g.stride, ww, g.out_w);
        T* dst = col.data() + ((static_cast<std::size_t>(c) * g.kernel_h + ky) * g.kernel_w + kx) *
                                  cols;
        for (int n = 0; n < nb; ++n) {
          const T* src = x.data() + x.offset(n, c, 0, 0);
          T* d = dst + n * p;
          std::fill(d, d + static_cast<std::size_t>(oy_lo) * g.out_w, T(0));
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            const T* srow = src + static_cast<std::size_t>(oy * g.stride + g.offset_y + ky) * ww;
            T* drow = d + static_cast<std::size_t>(oy) * g.out_w;
            std::fill(drow, drow + ox_lo, T(0));
            const int base = g.offset_x + kx;
            if (g.stride == 1) {
              std::copy(srow + ox_lo + base, srow + ox_hi + base, drow + ox_lo);
            } else {
              for (int ox = ox_lo; ox < ox_hi; ++ox) drow[ox] = srow[ox * g.stride + base];
            }
            std::fill(drow + ox_hi, drow + g.out_w, T(0));
          }
          std::fill(d + static_cast<std::size_t>(oy_hi) * g.out_w, d + p, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& col, const ConvGeometry& g, Tensor4<T>& dx) {
  const int nb = dx.n(), ch = dx.c(), hh = dx.h(), ww = dx.w();
  const std::size_t p = static_cast<std::size_t>(g.out_h) * g.out_w;
  const std::size_t cols = nb * p;
  for (int c = 0; c < ch; ++c) {
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      const auto [oy_lo, oy_hi] = valid_range(g.offset_y + ky, g.stride, hh, g.out_h);
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const auto [ox_lo, ox_hi] = valid_range(g.offset_x + kx, g.stride, ww, g.out_w);
        const T* src = col.data() +
                       ((static_cast<std::size_t>(c) * g.kernel_h + ky) * g.kernel_w + kx) * cols;
        const int base = g.offset_x + kx;
        for (int n = 0; n < nb; ++n) {
          T* dst = dx.data() + dx.offset(n, c, 0, 0);
          const T* s = src + n * p;
          for (int oy = oy_lo; oy < oy_hi; ++oy) {
            T* drow = dst + static_cast<std::size_t>(oy * g.stride + g.offset_y + ky) * ww;
            const T* srow = s + static_cast<std::size_t>(oy) * g.out_w;
            for (int ox = ox_lo; ox < ox_hi; ++ox) drow[ox * g.stride + base] += srow[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void he_uniform(Param<T>& p, int fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : p.value.vec()) v = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int cin, int cout, int k, int s, int p, bool with_bias)
    : weight(name + ".weight", Shape4{cout, cin, k, k}),
      has_bias(with_bias),
      in_channels(cin),
      out_channels(cout),
      kernel(k),
      stride(s),
      pad(p) {
  if (with_bias) bias = Param<T>(name + ".bias", Shape4{1, cout, 1, 1});
}

template <typename T>
Shape4 Conv2d<T>::output_shape(const Shape4& in) const {
  require(in.c == in_channels, weight.name + ": expected " + std::to_string(in_channels) +
                                   " input channels, got " + in.str());
  const int oh = conv_out_size(in.h, kernel, stride, pad);
  const int ow = conv_out_size(in.w, kernel, stride, pad);
  require(oh >= 1 && ow >= 1, weight.name + ": input " + in.str() + " smaller than kernel");
  return {in.n, out_channels, oh, ow};
}

template <typename T>
Tensor4<T> Conv2d<T>::forward(const Tensor4<T>& x) {
  const Shape4 os = output_shape(x.shape());
  in_shape_ = x.shape();
  geom_ = {kernel, kernel, stride, -pad, -pad, os.h, os.w};
  im2col(x, geom_, col_);
  const int kk = in_channels * kernel * kernel;
  const int np = static_cast<int>(os.n * os.plane());
  std::vector<T> y(static_cast<std::size_t>(out_channels) * np);
  gemm<T>(false, false, out_channels, np, kk, T(1), weight.value.data(), kk, col_.data(), np, T(0),
          y.data(), np);
  Tensor4<T> out(os);
  from_channel_major(y, out);
  if (has_bias) add_bias(out, bias);
  return out;
}

template <typename T>
Tensor4<T> Conv2d<T>::backward(const Tensor4<T>& dy, bool need_input_grad) {
  require(dy.shape() == Shape4{in_shape_.n, out_channels, geom_.out_h, geom_.out_w},
          weight.name + ": gradient shape " + dy.shape().str() + " does not match forward");
  const int kk = in_channels * kernel * kernel;
  const int np = static_cast<int>(dy.n() * dy.shape().plane());
  const auto dy_mat = to_channel_major(dy);
  gemm<T>(false, true, out_channels, kk, np, T(1), dy_mat.data(), np, col_.data(), np, T(1),
          weight.grad.data(), kk);
  if (has_bias) accumulate_bias_grad(dy, bias);
  if (!need_input_grad) return {};
  std::vector<T> dcol(static_cast<std::size_t>(kk) * np);
  gemm<T>(true, false, kk, np, out_channels, T(1), weight.value.data(), kk, dy_mat.data(), np,
          T(0), dcol.data(), np);
  Tensor4<T> dx(in_shape_);
  col2im(dcol, geom_, dx);
  return dx;
}

template <typename T>
std::vector<Param<T>*> Conv2d<T>::params() {
  if (has_bias) return {&weight, &bias};
  return {&weight};
}

template <typename T>
std::vector<const Param<T>*> Conv2d<T>::params() const {
  if (has_bias) return {&weight, &bias};
  return {&weight};
}

// ------------------------------------------------------- ConvTranspose2d

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int cin, int cout, int k, int s, int p,
                                    bool with_bias)
    : weight(name + ".weight", Shape4{cin, cout, k, k}),
      has_bias(with_bias),
      in_channels(cin),
      out_channels(cout),
      kernel(k),
      stride(s),
      pad(p) {
  if (with_bias) bias = Param<T>(name + ".bias", Shape4{1, cout, 1, 1});
}

template <typename T>
Shape4 ConvTranspose2d<T>::output_shape(const Shape4& in) const {
  require(in.c == in_channels, weight.name + ": expected " + std::to_string(in_channels) +
                                   " input channels, got " + in.str());
  const int oh = (in.h - 1) * stride - 2 * pad + kernel;
  const int ow = (in.w - 1) * stride - 2 * pad + kernel;
  require(oh >= 1 && ow >= 1, weight.name + ": empty output for input " + in.str());
  return {in.n, out_channels, oh, ow};
}

template <typename T>
Tensor4<T> ConvTranspose2d<T>::forward(const Tensor4<T>& x) {
  const Shape4 os = output_shape(x.shape());
  in_shape_ = x.shape();
  x_mat_ = to_channel_major(x);
  const int ck = out_channels * kernel * kernel;
  const int nq = static_cast<int>(x.n() * x.shape().plane());
  std::vector<T> col(static_cast<std::size_t>(ck) * nq);
  gemm<T>(true, false, ck, nq, in_channels, T(1), weight.value.data(), ck, x_mat_.data(), nq, T(0),
          col.data(), nq);
  Tensor4<T> out(os);
  col2im(col, ConvGeometry{kernel, kernel, stride, -pad, -pad, x.h(), x.w()}, out);
  if (has_bias) add_bias(out, bias);
  return out;
}

template <typename T>
Tensor4<T> ConvTranspose2d<T>::backward(const Tensor4<T>& dy, bool need_input_grad) {
  require(dy.shape() == output_shape(in_shape_),
          weight.name + ": gradient shape " + dy.shape().str() + " does not match forward");
  const int ck = out_channels * kernel * kernel;
  const int nq = static_cast<int>(in_shape_.n * in_shape_.plane());
  std::vector<T> dcol;
  im2col(dy, ConvGeometry{kernel, kernel, stride, -pad, -pad, in_shape_.h, in_shape_.w}, dcol);
  gemm<T>(false, true, in_channels, ck, nq, T(1), x_mat_.data(), nq, dcol.data(), nq, T(1),
          weight.grad.data(), ck);
  if (has_bias) accumulate_bias_grad(dy, bias);
  if (!need_input_grad) return {};
  std::vector<T> dx_mat(static_cast<std::size_t>(in_channels) * nq);
  gemm<T>(false, false, in_channels, nq, ck, T(1), weight.value.data(), ck, dcol.data(), nq, T(0),
          dx_mat.data(), nq);
  Tensor4<T> dx(in_shape_);
  from_channel_major(dx_mat, dx);
  return dx;
}

template <typename T>
std::vector<Param<T>*> ConvTranspose2d<T>::params() {
  if (has_bias) return {&weight, &bias};
  return {&weight};
}

template <typename T>
std::vector<const Param<T>*> ConvTranspose2d<T>::params() const {
  if (has_bias) return {&weight, &bias};
  return {&weight};
}

// -------------------------------------------------------- UpsampleConv2d

template <typename T>
UpsampleConv2d<T>::UpsampleConv2d(std::string name, int cin, int cout, int factor, int k, int s,
                                  int p, bool folded)
    : conv_(std::move(name), cin, cout, k, s, p, false), factor_(factor), folded_(folded) {
  if (factor < 1) throw ConfigError("upsampling factor must be >= 1");
  const int g = std::gcd(factor, s);
  period_ = factor / g;
  fold_stride_ = s / g;
  phases_.resize(period_);
  for (int r = 0; r < period_; ++r) {
    std::vector<int> d(k);
    for (int t = 0; t < k; ++t) d[t] = floor_div(s * r - p + t, factor);
    const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
    Phase& ph = phases_[r];
    ph.offset = *lo;
    ph.taps = *hi - *lo + 1;
    ph.slot.resize(k);
    for (int t = 0; t < k; ++t) ph.slot[t] = d[t] - ph.offset;
  }
}

template <typename T>
Shape4 UpsampleConv2d<T>::output_shape(const Shape4& in) const {
  return conv_.output_shape(Shape4{in.n, in.c, in.h * factor_, in.w * factor_});
}

template <typename T>
Tensor4<T> UpsampleConv2d<T>::forward(const Tensor4<T>& x) {
  if (!folded_) return conv_.forward(upsample_nearest(x, factor_));
  out_shape_ = output_shape(x.shape());
  in_shape_ = x.shape();
  const int cin = conv_.in_channels, cout = conv_.out_channels, k = conv_.kernel;
  const T* w = conv_.weight.value.data();
  Tensor4<T> out(out_shape_);
  cols_.assign(static_cast<std::size_t>(period_) * period_, {});
  std::vector<T> folded, y;
  for (int py = 0; py < period_; ++py) {
    const int rows = out_shape_.h > py ? ceil_div(out_shape_.h - py, period_) : 0;
    for (int px = 0; px < period_; ++px) {
      const int colsn = out_shape_.w > px ? ceil_div(out_shape_.w - px, period_) : 0;
      if (rows == 0 || colsn == 0) continue;
      const Phase& fy = phases_[py];
      const Phase& fx = phases_[px];
      const int kf = cin * fy.taps * fx.taps;
      folded.assign(static_cast<std::size_t>(cout) * kf, T(0));
      for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci) {
          const T* wk = w + (static_cast<std::size_t>(co) * cin + ci) * k * k;
          T* fk = folded.data() + (static_cast<std::size_t>(co) * cin + ci) * fy.taps * fx.taps;
          for (int t = 0; t < k; ++t) {
            for (int u = 0; u < k; ++u) fk[fy.slot[t] * fx.taps + fx.slot[u]] += wk[t * k + u];
          }
        }
      }
      auto& col = cols_[py * period_ + px];
      im2col(x, ConvGeometry{fy.taps, fx.taps, fold_stride_, fy.offset, fx.offset, rows, colsn},
             col);
      const int nq = x.n() * rows * colsn;
      y.resize(static_cast<std::size_t>(cout) * nq);
      gemm<T>(false, false, cout, nq, kf, T(1), folded.data(), kf, col.data(), nq, T(0), y.data(),
              nq);
      for (int co = 0; co < cout; ++co) {
        for (int n = 0; n < x.n(); ++n) {
          const T* src = y.data() + static_cast<std::size_t>(co) * nq + n * rows * colsn;
          for (int m = 0; m < rows; ++m) {
            for (int q = 0; q < colsn; ++q) {
              out.at(n, co, period_ * m + py, period_ * q + px) = src[m * colsn + q];
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> UpsampleConv2d<T>::backward(const Tensor4<T>& dy, bool need_input_grad) {
  if (!folded_) {
    auto du = conv_.backward(dy, need_input_grad);
    if (!need_input_grad) return {};
    return upsample_nearest_backward(du, factor_);
  }
  require(dy.shape() == out_shape_,
          conv_.weight.name + ": gradient shape " + dy.shape().str() + " does not match forward");
  const int cin = conv_.in_channels, cout = conv_.out_channels, k = conv_.kernel;
  const T* w = conv_.weight.value.data();
  T* dw = conv_.weight.grad.data();
  Tensor4<T> dx;
  if (need_input_grad) dx = Tensor4<T>(in_shape_);
  std::vector<T> folded, dfolded, dyr, dcol;
  for (int py = 0; py < period_; ++py) {
    const int rows = out_shape_.h > py ? ceil_div(out_shape_.h - py, period_) : 0;
    for (int px = 0; px < period_; ++px) {
      const int colsn = out_shape_.w > px ? ceil_div(out_shape_.w - px, period_) : 0;
      if (rows == 0 || colsn == 0) continue;
      const Phase& fy = phases_[py];
      const Phase& fx = phases_[px];
      const int ft = fy.taps * fx.taps;
      const int kf = cin * ft;
      const int nq = in_shape_.n * rows * colsn;
      dyr.resize(static_cast<std::size_t>(cout) * nq);
      for (int co = 0; co < cout; ++co) {
        for (int n = 0; n < in_shape_.n; ++n) {
          T* dst = dyr.data() + static_cast<std::size_t>(co) * nq + n * rows * colsn;
          for (int m = 0; m < rows; ++m) {
            for (int q = 0; q < colsn; ++q) {
              dst[m * colsn + q] = dy.at(n, co, period_ * m + py, period_ * q + px);
            }
          }
        }
      }
      const auto& col = cols_[py * period_ + px];
      dfolded.resize(static_cast<std::size_t>(cout) * kf);
      gemm<T>(false, true, cout, kf, nq, T(1), dyr.data(), nq, col.data(), nq, T(0),
              dfolded.data(), kf);
      folded.assign(static_cast<std::size_t>(cout) * kf, T(0));
      for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci) {
          const std::size_t base = (static_cast<std::size_t>(co) * cin + ci);
          const T* wk = w + base * k * k;
          T* dwk = dw + base * k * k;
          T* fk = folded.data() + base * ft;
          const T* dfk = dfolded.data() + base * ft;
          for (int t = 0; t < k; ++t) {
            for (int u = 0; u < k; ++u) {
              const int s = fy.slot[t] * fx.taps + fx.slot[u];
              fk[s] += wk[t * k + u];
              dwk[t * k + u] += dfk[s];
            }
          }
        }
      }
      if (!need_input_grad) continue;
      dcol.resize(static_cast<std::size_t>(kf) * nq);
      gemm<T>(true, false, kf, nq, cout, T(1), folded.data(), kf, dyr.data(), nq, T(0),
              dcol.data(), nq);
      col2im(dcol, ConvGeometry{fy.taps, fx.taps, fold_stride_, fy.offset, fx.offset, rows, colsn},
             dx);
    }
  }
  return dx;
}

// ----------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int ch)
    : gamma(name + ".gamma", Shape4{1, ch, 1, 1}),
      beta(name + ".beta", Shape4{1, ch, 1, 1}),
      running_mean(name + ".running_mean", Shape4{1, ch, 1, 1}, false),
      running_var(name + ".running_var", Shape4{1, ch, 1, 1}, false),
      channels(ch) {
  gamma.value.fill(T(1));
  running_var.value.fill(T(1));
}

template <typename T>
Tensor4<T> BatchNorm2d<T>::forward(const Tensor4<T>& x, bool batch_stats) {
  require(x.c() == channels, gamma.name + ": expected " + std::to_string(channels) +
                                 " channels, got " + x.shape().str());
  if (batch_stats && x.n() < 2) {
    throw ShapeError(gamma.name + ": batch statistics need N >= 2, got N = " +
                     std::to_string(x.n()));
  }
  shape_ = x.shape();
  used_batch_stats_ = batch_stats;
  const std::size_t p = x.shape().plane();
  const double count = static_cast<double>(x.n()) * p;
  xhat_.resize(x.size());
  inv_std_.assign(channels, 0.0);
  Tensor4<T> y(x.shape());
  for (int c = 0; c < channels; ++c) {
    double mean, var;
    if (batch_stats) {
      double s = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const T* row = x.data() + x.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < p; ++i) s += row[i];
      }
      mean = s / count;
      double ss = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const T* row = x.data() + x.offset(n, c, 0, 0);
        for (std::size_t i = 0; i < p; ++i) ss += (row[i] - mean) * (row[i] - mean);
      }
      var = ss / count;
      running_mean.value[c] =
          static_cast<T>(kMomentum * running_mean.value[c] + (1.0 - kMomentum) * mean);
      running_var.value[c] = static_cast<T>(kMomentum * running_var.value[c] +
                                            (1.0 - kMomentum) * var * count / (count - 1.0));
    } else {
      mean = running_mean.value[c];
      var = running_var.value[c];
    }
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[c] = inv;
    const double g = gamma.value[c];
    const double b = beta.value[c];
    for (int n = 0; n < x.n(); ++n) {
      const std::size_t off = x.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < p; ++i) {
        const double xh = (x[off + i] - mean) * inv;
        xhat_[off + i] = static_cast<T>(xh);
        y[off + i] = static_cast<T>(g * xh + b);
      }
    }
  }
  return y;
}

template <typename T>
Tensor4<T> BatchNorm2d<T>::backward(const Tensor4<T>& dy) {
  require(dy.shape() == shape_, gamma.name + ": gradient shape mismatch");
  const std::size_t p = shape_.plane();
  const double count = static_cast<double>(shape_.n) * p;
  Tensor4<T> dx(shape_);
  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < shape_.n; ++n) {
      const std::size_t off = dy.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < p; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += static_cast<double>(dy[off + i]) * xhat_[off + i];
      }
    }
    gamma.grad[c] += static_cast<T>(sum_dy_xhat);
    beta.grad[c] += static_cast<T>(sum_dy);
    const double g = gamma.value[c];
    const double inv = inv_std_[c];
    for (int n = 0; n < shape_.n; ++n) {
      const std::size_t off = dy.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < p; ++i) {
        if (used_batch_stats_) {
          dx[off + i] = static_cast<T>(g * inv / count *
                                       (count * dy[off + i] - sum_dy - xhat_[off + i] * sum_dy_xhat));
        } else {
          dx[off + i] = static_cast<T>(g * inv * dy[off + i]);
        }
      }
    }
  }
  return dx;
}

template <typename T>
std::vector<Param<T>*> BatchNorm2d<T>::params() {
  return {&gamma, &beta, &running_mean, &running_var};
}

template <typename T>
std::vector<const Param<T>*> BatchNorm2d<T>::params() const {
  return {&gamma, &beta, &running_mean, &running_var};
}

// --------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double r) : rate(r) {
  if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
}

template <typename T>
Tensor4<T> Dropout<T>::forward(const Tensor4<T>& x, bool active, std::mt19937_64* rng) {
  if (!active || rate == 0.0) {
    mask_.clear();
    return x;
  }
  if (rng == nullptr) throw ConfigError("active dropout needs a random stream");
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  mask_.resize(x.size());
  Tensor4<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = static_cast<double>((*rng)() >> 11) * 0x1.0p-53;
    mask_[i] = u < rate ? T(0) : scale;
    y[i] = x[i] * mask_[i];
  }
  return y;
}

template <typename T>
Tensor4<T> Dropout<T>::backward(const Tensor4<T>& dy) const {
  if (mask_.empty()) return dy;
  require(mask_.size() == dy.size(), "dropout: gradient shape mismatch");
  Tensor4<T> dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

// ------------------------------------------------------------ Activation

template <typename T>
Tensor4<T> activate(ActivationKind kind, const Tensor4<T>& x, double slope) {
  Tensor4<T> y(x.shape());
  switch (kind) {
    case ActivationKind::leaky_relu:
    case ActivationKind::relu: {
      const T s = kind == ActivationKind::relu ? T(0) : static_cast<T>(slope);
      if constexpr (std::is_same_v<T, float>) {
        simd::active().leaky_forward(x.data(), y.data(), x.size(), s);
      } else {
        simd::ref::leaky_forward<T>(x.data(), y.data(), x.size(), s);
      }
      break;
    }
    case ActivationKind::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
      break;
  }
  return y;
}

template <typename T>
Tensor4<T> Activation<T>::forward(const Tensor4<T>& x) {
  Tensor4<T> y = activate(kind, x, slope);
  cache_ = kind == ActivationKind::sigmoid ? y : x;
  return y;
}

template <typename T>
Tensor4<T> Activation<T>::backward(const Tensor4<T>& dy) const {
  require(dy.shape() == cache_.shape(), "activation: gradient shape mismatch");
  Tensor4<T> dx(dy.shape());
  if (kind == ActivationKind::sigmoid) {
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * cache_[i] * (T(1) - cache_[i]);
    return dx;
  }
  const T s = kind == ActivationKind::relu ? T(0) : static_cast<T>(slope);
  if constexpr (std::is_same_v<T, float>) {
    simd::active().leaky_backward(cache_.data(), dy.data(), dx.data(), dy.size(), s);
  } else {
    simd::ref::leaky_backward<T>(cache_.data(), dy.data(), dx.data(), dy.size(), s);
  }
  return dx;
}

// ------------------------------------------------------------- Reshaping

template <typename T>
Tensor4<T> upsample_nearest(const Tensor4<T>& x, int f) {
  if (f < 1) throw ConfigError("upsampling factor must be >= 1");
  Tensor4<T> y(Shape4{x.n(), x.c(), x.h() * f, x.w() * f});
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int yy = 0; yy < y.h(); ++yy) {
        const T* src = x.data() + x.offset(n, c, yy / f, 0);
        T* dst = y.data() + y.offset(n, c, yy, 0);
        for (int xx = 0; xx < y.w(); ++xx) dst[xx] = src[xx / f];
      }
    }
  }
  return y;
}

template <typename T>
Tensor4<T> upsample_nearest_backward(const Tensor4<T>& dy, int f) {
  require(dy.h() % f == 0 && dy.w() % f == 0, "upsample backward: size not divisible by factor");
  Tensor4<T> dx(Shape4{dy.n(), dy.c(), dy.h() / f, dy.w() / f});
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      for (int yy = 0; yy < dy.h(); ++yy) {
        const T* src = dy.data() + dy.offset(n, c, yy, 0);
        T* dst = dx.data() + dx.offset(n, c, yy / f, 0);
        for (int xx = 0; xx < dy.w(); ++xx) dst[xx / f] += src[xx];
      }
    }
  }
  return dx;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  require(a.n() == b.n() && a.h() == b.h() && a.w() == b.w(),
          "concat: " + a.shape().str() + " vs " + b.shape().str());
  Tensor4<T> y(Shape4{a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t pa = static_cast<std::size_t>(a.c()) * a.shape().plane();
  const std::size_t pb = static_cast<std::size_t>(b.c()) * b.shape().plane();
  for (int n = 0; n < a.n(); ++n) {
    T* dst = y.data() + y.offset(n, 0, 0, 0);
    std::copy_n(a.data() + a.offset(n, 0, 0, 0), pa, dst);
    std::copy_n(b.data() + b.offset(n, 0, 0, 0), pb, dst + pa);
  }
  return y;
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& x, int first) {
  require(first >= 1 && first < x.c(), "split: bad channel split");
  Tensor4<T> a(Shape4{x.n(), first, x.h(), x.w()});
  Tensor4<T> b(Shape4{x.n(), x.c() - first, x.h(), x.w()});
  const std::size_t pa = static_cast<std::size_t>(a.c()) * a.shape().plane();
  const std::size_t pb = static_cast<std::size_t>(b.c()) * b.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    const T* src = x.data() + x.offset(n, 0, 0, 0);
    std::copy_n(src, pa, a.data() + a.offset(n, 0, 0, 0));
    std::copy_n(src + pa, pb, b.data() + b.offset(n, 0, 0, 0));
  }
  return {std::move(a), std::move(b)};
}

// --------------------------------------------------------- AttentionGate

template <typename T>
AttentionGate<T>::AttentionGate(std::string name, int gate_channels, int skip_channels,
                                int inter)
    : w_x(name + ".wx", skip_channels, inter, 1, 2, 0, false),
      w_g(name + ".wg", gate_channels, inter, 1, 1, 0, true),
      psi(name + ".psi", inter, 1, 1, 1, 0, true),
      inter_channels(inter) {}

template <typename T>
typename AttentionGate<T>::Output AttentionGate<T>::forward(const Tensor4<T>& g,
                                                           const Tensor4<T>& x) {
  require(g.n() == x.n() && x.h() == 2 * g.h() && x.w() == 2 * g.w(),
          w_x.weight.name.substr(0, w_x.weight.name.find('.')) + ": gating " + g.shape().str() +
              " must be half the spatial size of skip " + x.shape().str());
  x_ = x;
  pre_ = w_x.forward(x);
  pre_ += w_g.forward(g);
  const Tensor4<T> q = activate(ActivationKind::relu, pre_);
  alpha_low_ = activate(ActivationKind::sigmoid, psi.forward(q));
  alpha_ = upsample_nearest(alpha_low_, 2);
  Tensor4<T> gated(x.shape());
  const std::size_t p = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    const T* a = alpha_.data() + alpha_.offset(n, 0, 0, 0);
    for (int c = 0; c < x.c(); ++c) {
      const std::size_t off = x.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < p; ++i) gated[off + i] = a[i] * x[off + i];
    }
  }
  return {std::move(gated), alpha_};
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> AttentionGate<T>::backward(const Tensor4<T>& d_gated) {
  require(d_gated.shape() == x_.shape(), "attention gate: gradient shape mismatch");
  const std::size_t p = x_.shape().plane();
  Tensor4<T> dx(x_.shape());
  Tensor4<T> d_alpha(alpha_.shape());
  for (int n = 0; n < x_.n(); ++n) {
    const T* a = alpha_.data() + alpha_.offset(n, 0, 0, 0);
    T* da = d_alpha.data() + d_alpha.offset(n, 0, 0, 0);
    for (int c = 0; c < x_.c(); ++c) {
      const std::size_t off = x_.offset(n, c, 0, 0);
      for (std::size_t i = 0; i < p; ++i) {
        da[i] += d_gated[off + i] * x_[off + i];
        dx[off + i] = d_gated[off + i] * a[i];
      }
    }
  }
  Tensor4<T> d_low = upsample_nearest_backward(d_alpha, 2);
  for (std::size_t i = 0; i < d_low.size(); ++i) {
    d_low[i] *= alpha_low_[i] * (T(1) - alpha_low_[i]);
  }
  Tensor4<T> d_pre = psi.backward(d_low);
  for (std::size_t i = 0; i < d_pre.size(); ++i) {
    if (!(pre_[i] > T(0))) d_pre[i] = T(0);
  }
  dx += w_x.backward(d_pre);
  Tensor4<T> dg = w_g.backward(d_pre);
  return {std::move(dg), std::move(dx)};
}

template <typename T>
std::vector<Param<T>*> AttentionGate<T>::params() {
  return {&w_x.weight, &w_g.weight, &w_g.bias, &psi.weight, &psi.bias};
}

template <typename T>
std::vector<const Param<T>*> AttentionGate<T>::params() const {
  return {&w_x.weight, &w_g.weight, &w_g.bias, &psi.weight, &psi.bias};
}

#define GW_INSTANTIATE(T)                                                                        \
  template void gemm<T>(bool, bool, int, int, int, T, const T*, int, const T*, int, T, T*, int); \
  template void im2col<T>(const Tensor4<T>&, const ConvGeometry&, std::vector<T>&);              \
  template void col2im<T>(const std::vector<T>&, const ConvGeometry&, Tensor4<T>&);              \
  template void he_uniform<T>(Param<T>&, int, std::mt19937_64&);                                 \
  template class Conv2d<T>;                                                                      \
  template class ConvTranspose2d<T>;                                                             \
  template class UpsampleConv2d<T>;                                                              \
  template class BatchNorm2d<T>;                                                                 \
  template class Dropout<T>;                                                                     \
  template class Activation<T>;                                                                  \
  template Tensor4<T> activate<T>(ActivationKind, const Tensor4<T>&, double);                    \
  template Tensor4<T> upsample_nearest<T>(const Tensor4<T>&, int);                               \
  template Tensor4<T> upsample_nearest_backward<T>(const Tensor4<T>&, int);                      \
  template Tensor4<T> concat_channels<T>(const Tensor4<T>&, const Tensor4<T>&);                  \
  template std::pair<Tensor4<T>, Tensor4<T>> split_channels<T>(const Tensor4<T>&, int);          \
  template class AttentionGate<T>;

GW_INSTANTIATE(float)
GW_INSTANTIATE(double)

#undef GW_INSTANTIATE

}  // namespace gw::nn
