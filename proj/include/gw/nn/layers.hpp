#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gw/nn/tensor.hpp"

namespace gw::nn {

// Which stochastic/normalisation behaviour a forward pass uses.
struct RunMode {
  bool batch_stats = false;  // batch norm: batch statistics, update running stats
  bool dropout = false;      // dropout active

  static constexpr RunMode train() { return {true, true}; }
  static constexpr RunMode eval() { return {false, false}; }
  // MC dropout: running-stat normalisation with stochastic dropout.
  static constexpr RunMode mc_dropout() { return {false, true}; }
};

// W innermost. Output positions o sample input rows o * stride + offset + t.
struct ConvGeometry {
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int offset_y = 0;
  int offset_x = 0;
  int out_h = 1;
  int out_w = 1;
};

int conv_out_size(int in, int kernel, int stride, int pad);

// col: (C * kh * kw) x (N * out_h * out_w); out-of-range taps read 0.
template <typename T>
void im2col(const Tensor4<T>& x, const ConvGeometry& g, std::vector<T>& col);
// Adjoint of im2col: accumulates col into dx.
template <typename T>
void col2im(const std::vector<T>& col, const ConvGeometry& g, Tensor4<T>& dx);

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad,
         bool bias);

  Tensor4<T> forward(const Tensor4<T>& x);
  // Accumulates parameter gradients; returns dL/dx unless need_input_grad is false.
  Tensor4<T> backward(const Tensor4<T>& dy, bool need_input_grad = true);

  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;
  Shape4 output_shape(const Shape4& in) const;

  Param<T> weight;  // (C_out, C_in, k, k)
  Param<T> bias;    // (1, C_out, 1, 1), empty when has_bias is false
  bool has_bias = false;
  int in_channels = 0, out_channels = 0, kernel = 1, stride = 1, pad = 0;

 private:
  Shape4 in_shape_{};
  ConvGeometry geom_{};
  std::vector<T> col_;
};

// Weight layout (C_in, C_out, k, k); output spatial (H - 1) * s - 2p + k.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
                  int pad, bool bias);

  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& dy, bool need_input_grad = true);

  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;
  Shape4 output_shape(const Shape4& in) const;

  Param<T> weight;
  Param<T> bias;
  bool has_bias = false;
  int in_channels = 0, out_channels = 0, kernel = 1, stride = 1, pad = 0;

 private:
  Shape4 in_shape_{};
  std::vector<T> x_mat_;
};

// Nearest-neighbour upsampling by `factor` followed by a convolution. The
// folded path evaluates the same linear map without materialising the
// upsampled tensor: for each output phase, the k x k kernel collapses onto
// the few original-resolution taps it actually reads. The reference path runs
// upsample_nearest + conv literally.
template <typename T>
class UpsampleConv2d {
 public:
  UpsampleConv2d() = default;
  UpsampleConv2d(std::string name, int in_channels, int out_channels, int factor, int kernel,
                 int stride, int pad, bool folded = true);

  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& dy, bool need_input_grad = true);

  std::vector<Param<T>*> params() { return conv_.params(); }
  std::vector<const Param<T>*> params() const { return std::as_const(conv_).params(); }
  Shape4 output_shape(const Shape4& in) const;

  Param<T>& weight() { return conv_.weight; }
  bool folded() const { return folded_; }
  void set_folded(bool folded) { folded_ = folded; }
  int factor() const { return factor_; }

 private:
  struct Phase {
    int offset = 0;         // smallest original offset read
    int taps = 0;           // distinct original offsets read
    std::vector<int> slot;  // kernel tap t -> folded tap index
  };

  Conv2d<T> conv_;
  int factor_ = 1;
  bool folded_ = true;
  int period_ = 1;       // output phases per dimension
  int fold_stride_ = 1;  // original-resolution stride between outputs of one phase
  std::vector<Phase> phases_;
  Shape4 in_shape_{};
  Shape4 out_shape_{};
  std::vector<std::vector<T>> cols_;  // per (phase_y, phase_x)
};

template <typename T>
class BatchNorm2d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm2d() = default;
  BatchNorm2d(std::string name, int channels);

  // batch_stats requires N >= 2.
  Tensor4<T> forward(const Tensor4<T>& x, bool batch_stats);
  Tensor4<T> backward(const Tensor4<T>& dy);

  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;

  Param<T> gamma, beta;                   // trainable
  Param<T> running_mean, running_var;     // non-trainable
  int channels = 0;

 private:
  bool used_batch_stats_ = false;
  std::vector<T> xhat_;
  std::vector<double> inv_std_;
  Shape4 shape_{};
};

// Inverted dropout: survivors scaled by 1 / (1 - rate) so inactive is identity.
template <typename T>
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double rate);

  Tensor4<T> forward(const Tensor4<T>& x, bool active, std::mt19937_64* rng);
  Tensor4<T> backward(const Tensor4<T>& dy) const;

  double rate = 0.0;

 private:
  std::vector<T> mask_;  // empty when the last forward was the identity
};

enum class ActivationKind { leaky_relu, relu, sigmoid };

template <typename T>
class Activation {
 public:
  Activation() = default;
  explicit Activation(ActivationKind kind, double slope = 0.0) : kind(kind), slope(slope) {}

  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& dy) const;

  ActivationKind kind = ActivationKind::relu;
  double slope = 0.0;

 private:
  Tensor4<T> cache_;  // input for (leaky) relu, output for sigmoid
};

template <typename T>
Tensor4<T> activate(ActivationKind kind, const Tensor4<T>& x, double slope = 0.0);

template <typename T>
Tensor4<T> upsample_nearest(const Tensor4<T>& x, int factor);
template <typename T>
Tensor4<T> upsample_nearest_backward(const Tensor4<T>& dy, int factor);

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& x, int first_channels);

// Additive soft attention on a skip connection:
//   q     = relu(W_x * x (1x1, stride 2) + W_g * g (1x1) + b_g)
//   alpha = upsample_nearest(sigmoid(psi * q + b_psi), 2)
//   out   = alpha (broadcast over channels) * x
// g must have half the spatial size of x.
template <typename T>
class AttentionGate {
 public:
  AttentionGate() = default;
  AttentionGate(std::string name, int gate_channels, int skip_channels, int inter_channels);

  struct Output {
    Tensor4<T> gated;
    Tensor4<T> alpha;  // (N, 1, H_x, W_x)
  };
  Output forward(const Tensor4<T>& g, const Tensor4<T>& x);
  // Returns (dL/dg, dL/dx).
  std::pair<Tensor4<T>, Tensor4<T>> backward(const Tensor4<T>& d_gated);

  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;

  Conv2d<T> w_x, w_g, psi;
  int inter_channels = 0;

 private:
  Tensor4<T> x_, alpha_low_, alpha_, pre_;
};

}  // namespace gw::nn

namespace gw::nn {

// U(-sqrt(6 / fan_in), sqrt(6 / fan_in)) in row-major draw order.
template <typename T>
void he_uniform(Param<T>& p, int fan_in, std::mt19937_64& rng);

}  // namespace gw::nn
