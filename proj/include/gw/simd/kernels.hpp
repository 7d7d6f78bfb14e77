#pragma once

#include <cstddef>

namespace gw::simd {

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);

// Row-major C = alpha * op(A) * op(B) + beta * C, op(A) is m x k, op(B) is
// k x n. When beta == 0, C is not read.
using GemmFn = void (*)(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
                        const float* a, int lda, const float* b, int ldb, float beta, float* c,
                        int ldc);
// y = x > 0 ? x : slope * x   (slope 0 gives ReLU)
using LeakyForwardFn = void (*)(const float* x, float* y, std::size_t n, float slope);
// dx = dy * (x > 0 ? 1 : slope)
using LeakyBackwardFn = void (*)(const float* x, const float* dy, float* dx, std::size_t n,
                                 float slope);
// y += a * x
using AxpyFn = void (*)(std::size_t n, float a, const float* x, float* y);
// Bias-corrected Adam update; correction1 = 1 - beta1^t, correction2 = 1 - beta2^t.
using AdamFn = void (*)(float* param, float* m, float* v, const float* grad, std::size_t n,
                        float lr, float beta1, float beta2, float eps, float correction1,
                        float correction2);

struct KernelTable {
  Isa isa;
  GemmFn gemm;
  LeakyForwardFn leaky_forward;
  LeakyBackwardFn leaky_backward;
  AxpyFn axpy;
  AdamFn adam;
};

const KernelTable& scalar_kernels();

// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_kernels();

bool cpu_supports_avx2_fma();

// Kernels chosen once at first use: the best ISA the CPU supports, unless
// GW_ISA=scalar|avx2 is set in the environment.
const KernelTable& active();

// Overrides the selection (tests and benchmarks). Throws ConfigError when
// the requested ISA is unavailable.
void select(Isa isa);

}  // namespace gw::simd
