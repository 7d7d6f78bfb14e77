#include <cmath>

#include "gw/simd/kernels.hpp"
#include "gw/simd/reference.hpp"

namespace gw::simd {
namespace {

void gemm_scalar(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  ref::gemm<float>(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void leaky_forward_scalar(const float* x, float* y, std::size_t n, float slope) {
  ref::leaky_forward<float>(x, y, n, slope);
}

void leaky_backward_scalar(const float* x, const float* dy, float* dx, std::size_t n,
                           float slope) {
  ref::leaky_backward<float>(x, dy, dx, n, slope);
}

void axpy_scalar(std::size_t n, float a, const float* x, float* y) { ref::axpy<float>(n, a, x, y); }

void adam_scalar(float* p, float* m, float* v, const float* g, std::size_t n, float lr,
                 float beta1, float beta2, float eps, float c1, float c2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float mhat = m[i] / c1;
    const float vhat = v[i] / c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::scalar,          gemm_scalar, leaky_forward_scalar,
                                 leaky_backward_scalar, axpy_scalar, adam_scalar};
  return table;
}

}  // namespace gw::simd
