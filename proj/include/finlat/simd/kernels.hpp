#pragma once
// Data-parallel kernels for the backward-induction and superhedging inner
// loops. kernels_scalar.cpp holds the reference implementations,
// kernels_avx2.cpp the vector variants; dispatch.cpp picks one at runtime.
// Both variants perform the same IEEE operations per element, so results
// compare equal to the last bit (the equivalence suite asserts this).

#include <cstddef>

namespace finlat::simd {

struct KernelTable {
  // out[i] = a*x[i] + b*y[i]
  void (*axpby)(double a, const double* x, double b, const double* y,
                double* out, std::size_t n);
  // out[i] = q[i]*v[i+1] + (1-q[i])*v[i], v has n+1 entries
  void (*weighted_adjacent)(const double* q, const double* v, double* out,
                            std::size_t n);
  // out[i] = a*max(x[i],0) + b*min(x[i],0)
  void (*pos_neg_scale)(const double* x, double a, double b, double* out,
                        std::size_t n);
  // out[i] = max(x[i], y[i])
  void (*max2)(const double* x, const double* y, double* out, std::size_t n);
  double (*min_reduce)(const double* x, std::size_t n);
  double (*max_abs_diff)(const double* x, const double* y, std::size_t n);
  const char* name;
};

const KernelTable& scalar_kernels();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_kernels();
bool cpu_has_avx2();
#endif

// Active table. AVX2 when available, overridable via FINLAT_SIMD
// (one of: scalar, avx2, auto).
const KernelTable& kernels();

}  // namespace finlat::simd
