// Compiled with -mavx2 -mfma; reached only through the dispatch table after
// a CPUID check.
#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <memory>

#include "gw/simd/kernels.hpp"

namespace gw::simd {
namespace {

constexpr int kMr = 6;
constexpr int kNr = 16;
constexpr int kKc = 256;
constexpr int kMc = 96;
constexpr int kNc = 2048;

struct AlignedFree {
  void operator()(float* p) const { std::free(p); }
};
using Buffer = std::unique_ptr<float[], AlignedFree>;

float* packing_buffer(Buffer& buf, std::size_t floats) {
  if (!buf) buf.reset(static_cast<float*>(std::aligned_alloc(64, floats * sizeof(float))));
  return buf.get();
}

void pack_a(bool ta, const float* a, int lda, int i0, int mc, int p0, int kc, float* dst) {
  for (int ir = 0; ir < mc; ir += kMr) {
    const int mr = std::min(kMr, mc - ir);
    if (!ta) {
      const float* rows[kMr];
      for (int ii = 0; ii < mr; ++ii) {
        rows[ii] = a + static_cast<std::ptrdiff_t>(i0 + ir + ii) * lda + p0;
      }
      for (int p = 0; p < kc; ++p) {
        int ii = 0;
        for (; ii < mr; ++ii) dst[ii] = rows[ii][p];
        for (; ii < kMr; ++ii) dst[ii] = 0.0f;
        dst += kMr;
      }
    } else {
      for (int p = 0; p < kc; ++p) {
        const float* src = a + static_cast<std::ptrdiff_t>(p0 + p) * lda + i0 + ir;
        int ii = 0;
        for (; ii < mr; ++ii) dst[ii] = src[ii];
        for (; ii < kMr; ++ii) dst[ii] = 0.0f;
        dst += kMr;
      }
    }
  }
}

void pack_b(bool tb, const float* b, int ldb, int p0, int kc, int j0, int nc, float* dst) {
  for (int jr = 0; jr < nc; jr += kNr) {
    const int nr = std::min(kNr, nc - jr);
    if (!tb) {
      for (int p = 0; p < kc; ++p) {
        const float* src = b + static_cast<std::ptrdiff_t>(p0 + p) * ldb + j0 + jr;
        if (nr == kNr) {
          _mm256_store_ps(dst, _mm256_loadu_ps(src));
          _mm256_store_ps(dst + 8, _mm256_loadu_ps(src + 8));
        } else {
          int jj = 0;
          for (; jj < nr; ++jj) dst[jj] = src[jj];
          for (; jj < kNr; ++jj) dst[jj] = 0.0f;
        }
        dst += kNr;
      }
    } else {
      for (int jj = 0; jj < kNr; ++jj) {
        if (jj < nr) {
          const float* src = b + static_cast<std::ptrdiff_t>(j0 + jr + jj) * ldb + p0;
          for (int p = 0; p < kc; ++p) dst[p * kNr + jj] = src[p];
        } else {
          for (int p = 0; p < kc; ++p) dst[p * kNr + jj] = 0.0f;
        }
      }
      dst += kc * kNr;
    }
  }
}

inline void store_row(float* c, __m256 lo, __m256 hi, __m256 alpha, float beta) {
  lo = _mm256_mul_ps(lo, alpha);
  hi = _mm256_mul_ps(hi, alpha);
  if (beta != 0.0f) {
    const __m256 vb = _mm256_set1_ps(beta);
    lo = _mm256_fmadd_ps(vb, _mm256_loadu_ps(c), lo);
    hi = _mm256_fmadd_ps(vb, _mm256_loadu_ps(c + 8), hi);
  }
  _mm256_storeu_ps(c, lo);
  _mm256_storeu_ps(c + 8, hi);
}

// 6x16 register tile: 12 accumulators, 2 B loads and 6 broadcasts per k.
void micro_kernel(int kc, const float* ap, const float* bp, float* c, int ldc, float alpha,
                  float beta, int mr, int nr) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (int p = 0; p < kc; ++p) {
    const __m256 b0 = _mm256_load_ps(bp);
    const __m256 b1 = _mm256_load_ps(bp + 8);
    __m256 a = _mm256_broadcast_ss(ap + 0);
    c00 = _mm256_fmadd_ps(a, b0, c00);
    c01 = _mm256_fmadd_ps(a, b1, c01);
    a = _mm256_broadcast_ss(ap + 1);
    c10 = _mm256_fmadd_ps(a, b0, c10);
    c11 = _mm256_fmadd_ps(a, b1, c11);
    a = _mm256_broadcast_ss(ap + 2);
    c20 = _mm256_fmadd_ps(a, b0, c20);
    c21 = _mm256_fmadd_ps(a, b1, c21);
    a = _mm256_broadcast_ss(ap + 3);
    c30 = _mm256_fmadd_ps(a, b0, c30);
    c31 = _mm256_fmadd_ps(a, b1, c31);
    a = _mm256_broadcast_ss(ap + 4);
    c40 = _mm256_fmadd_ps(a, b0, c40);
    c41 = _mm256_fmadd_ps(a, b1, c41);
    a = _mm256_broadcast_ss(ap + 5);
    c50 = _mm256_fmadd_ps(a, b0, c50);
    c51 = _mm256_fmadd_ps(a, b1, c51);
    ap += kMr;
    bp += kNr;
  }
  const __m256 va = _mm256_set1_ps(alpha);
  if (mr == kMr && nr == kNr) {
    store_row(c + 0 * static_cast<std::ptrdiff_t>(ldc), c00, c01, va, beta);
    store_row(c + 1 * static_cast<std::ptrdiff_t>(ldc), c10, c11, va, beta);
    store_row(c + 2 * static_cast<std::ptrdiff_t>(ldc), c20, c21, va, beta);
    store_row(c + 3 * static_cast<std::ptrdiff_t>(ldc), c30, c31, va, beta);
    store_row(c + 4 * static_cast<std::ptrdiff_t>(ldc), c40, c41, va, beta);
    store_row(c + 5 * static_cast<std::ptrdiff_t>(ldc), c50, c51, va, beta);
    return;
  }
  alignas(32) float tile[kMr][kNr];
  _mm256_store_ps(tile[0], c00);
  _mm256_store_ps(tile[0] + 8, c01);
  _mm256_store_ps(tile[1], c10);
  _mm256_store_ps(tile[1] + 8, c11);
  _mm256_store_ps(tile[2], c20);
  _mm256_store_ps(tile[2] + 8, c21);
  _mm256_store_ps(tile[3], c30);
  _mm256_store_ps(tile[3] + 8, c31);
  _mm256_store_ps(tile[4], c40);
  _mm256_store_ps(tile[4] + 8, c41);
  _mm256_store_ps(tile[5], c50);
  _mm256_store_ps(tile[5] + 8, c51);
  for (int i = 0; i < mr; ++i) {
    float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < nr; ++j) {
      crow[j] = beta == 0.0f ? alpha * tile[i][j] : alpha * tile[i][j] + beta * crow[j];
    }
  }
}

void gemm_avx2(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
               const float* b, int ldb, float beta, float* c, int ldc) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0 || alpha == 0.0f) {
    for (int i = 0; i < m; ++i) {
      float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
      for (int j = 0; j < n; ++j) crow[j] = beta == 0.0f ? 0.0f : beta * crow[j];
    }
    return;
  }
  thread_local Buffer a_buf, b_buf;
  float* ap = packing_buffer(a_buf, static_cast<std::size_t>(kMc) * kKc);
  float* bp = packing_buffer(b_buf, static_cast<std::size_t>(kKc) * kNc);

  for (int jc = 0; jc < n; jc += kNc) {
    const int nc = std::min(kNc, n - jc);
    for (int pc = 0; pc < k; pc += kKc) {
      const int kc = std::min(kKc, k - pc);
      const float beta_eff = pc == 0 ? beta : 1.0f;
      pack_b(tb, b, ldb, pc, kc, jc, nc, bp);
      for (int ic = 0; ic < m; ic += kMc) {
        const int mc = std::min(kMc, m - ic);
        pack_a(ta, a, lda, ic, mc, pc, kc, ap);
        for (int jr = 0; jr < nc; jr += kNr) {
          for (int ir = 0; ir < mc; ir += kMr) {
            micro_kernel(kc, ap + static_cast<std::ptrdiff_t>(ir) * kc,
                         bp + static_cast<std::ptrdiff_t>(jr) * kc,
                         c + static_cast<std::ptrdiff_t>(ic + ir) * ldc + jc + jr, ldc, alpha,
                         beta_eff, std::min(kMr, mc - ir), std::min(kNr, nc - jr));
          }
        }
      }
    }
  }
}

void leaky_forward_avx2(const float* x, float* y, std::size_t n, float slope) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256 pos = _mm256_cmp_ps(v, zero, _CMP_GT_OQ);
    _mm256_storeu_ps(y + i, _mm256_blendv_ps(_mm256_mul_ps(vs, v), v, pos));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void leaky_backward_avx2(const float* x, const float* dy, float* dx, std::size_t n,
                         float slope) {
  const __m256 vs = _mm256_set1_ps(slope);
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(dy + i);
    const __m256 pos = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_blendv_ps(_mm256_mul_ps(vs, g), g, pos));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : slope * dy[i];
}

void axpy_avx2(std::size_t n, float a, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void adam_avx2(float* p, float* m, float* v, const float* g, std::size_t n, float lr, float beta1,
               float beta2, float eps, float c1, float c2) {
  const __m256 vb1 = _mm256_set1_ps(beta1), vb1c = _mm256_set1_ps(1.0f - beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2), vb2c = _mm256_set1_ps(1.0f - beta2);
  const __m256 vc1 = _mm256_set1_ps(c1), vc2 = _mm256_set1_ps(c2);
  const __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gi = _mm256_loadu_ps(g + i);
    const __m256 mi =
        _mm256_add_ps(_mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(vb1c, gi));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(vb2c, _mm256_mul_ps(gi, gi)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mhat = _mm256_div_ps(mi, vc1);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(_mm256_div_ps(vi, vc2)), veps);
    _mm256_storeu_ps(p + i,
                     _mm256_sub_ps(_mm256_loadu_ps(p + i),
                                   _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom)));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

}  // namespace

const KernelTable& avx2_kernel_table() {
  static const KernelTable table{Isa::avx2,          gemm_avx2, leaky_forward_avx2,
                                 leaky_backward_avx2, axpy_avx2, adam_avx2};
  return table;
}

}  // namespace gw::simd
