#pragma once

#include "gw/nn/tensor.hpp"

namespace gw::train {

// Mean over the batch of per-image pixel-mean squared error.
template <typename T>
double mse_loss(const nn::Tensor4<T>& pred, const nn::Tensor4<T>& target) {
  if (!(pred.shape() == target.shape())) {
    throw ShapeError("mse_loss: prediction " + pred.shape().str() + " vs target " +
                     target.shape().str());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    s += d * d;
  }
  // Equal image sizes make the batch mean of pixel means the global mean.
  return s / static_cast<double>(pred.size());
}

template <typename T>
nn::Tensor4<T> mse_loss_grad(const nn::Tensor4<T>& pred, const nn::Tensor4<T>& target) {
  if (!(pred.shape() == target.shape())) {
    throw ShapeError("mse_loss: prediction " + pred.shape().str() + " vs target " +
                     target.shape().str());
  }
  nn::Tensor4<T> g(pred.shape());
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    g[i] = static_cast<T>(scale * (static_cast<double>(pred[i]) - target[i]));
  }
  return g;
}

}  // namespace gw::train
