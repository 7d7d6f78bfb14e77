#pragma once

#include <cstddef>

// Portable reference kernels, templated so the float64 gradient-check path
// shares them with the float32 scalar table.
namespace gw::simd::ref {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (beta == T(0)) {
      for (int j = 0; j < n; ++j) crow[j] = T(0);
    } else if (beta != T(1)) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  auto op_a = [&](int i, int p) {
    return trans_a ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                   : a[static_cast<std::ptrdiff_t>(i) * lda + p];
  };
  if (!trans_b) {
    for (int i = 0; i < m; ++i) {
      T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
      for (int p = 0; p < k; ++p) {
        const T s = alpha * op_a(i, p);
        const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
      for (int j = 0; j < n; ++j) {
        const T* bcol = b + static_cast<std::ptrdiff_t>(j) * ldb;
        T s = T(0);
        for (int p = 0; p < k; ++p) s += op_a(i, p) * bcol[p];
        crow[j] += alpha * s;
      }
    }
  }
}

template <typename T>
void leaky_forward(const T* x, T* y, std::size_t n, T slope) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

template <typename T>
void leaky_backward(const T* x, const T* dy, T* dx, std::size_t n, T slope) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : slope * dy[i];
}

template <typename T>
void axpy(std::size_t n, T a, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace gw::simd::ref
