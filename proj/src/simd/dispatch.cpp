#include <atomic>
#include <cstdlib>
#include <string>

#include "gw/core/error.hpp"
#include "gw/simd/kernels.hpp"

namespace gw::simd {

#if defined(GW_HAVE_AVX2_KERNELS)
const KernelTable& avx2_kernel_table();
#endif

namespace {

const KernelTable* initial_selection() {
  if (const char* env = std::getenv("GW_ISA")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_kernels();
    if (want == "avx2" && avx2_kernels() && cpu_supports_avx2_fma()) return avx2_kernels();
  }
  if (avx2_kernels() && cpu_supports_avx2_fma()) return avx2_kernels();
  return &scalar_kernels();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_selection()};
  return table;
}

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable* avx2_kernels() {
#if defined(GW_HAVE_AVX2_KERNELS)
  return &avx2_kernel_table();
#else
  return nullptr;
#endif
}

bool cpu_supports_avx2_fma() {
#if defined(__GNUC__) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) {
  if (isa == Isa::scalar) {
    current().store(&scalar_kernels(), std::memory_order_release);
    return;
  }
  if (!avx2_kernels() || !cpu_supports_avx2_fma()) {
    throw ConfigError("avx2 kernels unavailable on this build or CPU");
  }
  current().store(avx2_kernels(), std::memory_order_release);
}

}  // namespace gw::simd
