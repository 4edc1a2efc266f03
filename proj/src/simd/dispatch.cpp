#include "finlat/simd/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace finlat::simd {
namespace {

const KernelTable& select() {
  const char* env = std::getenv("FINLAT_SIMD");
#if defined(__x86_64__) || defined(_M_X64)
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return scalar_kernels();
    if (std::strcmp(env, "avx2") == 0) return avx2_kernels();
  }
  if (cpu_has_avx2()) return avx2_kernels();
#else
  (void)env;
#endif
  return scalar_kernels();
}

}  // namespace

const KernelTable& kernels() {
  static const KernelTable& active = select();
  return active;
}

}  // namespace finlat::simd
