// AVX2 kernel variants. Per element these perform exactly the operations of
// the scalar reference (mul/add, no FMA), so outputs are bit-identical.

#include "finlat/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

namespace finlat::simd {
namespace {

void axpby_v(double a, const double* x, double b, const double* y, double* out,
             std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_mul_pd(va, vx), _mm256_mul_pd(vb, vy)));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void weighted_adjacent_v(const double* q, const double* v, double* out,
                         std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vq = _mm256_loadu_pd(q + i);
    const __m256d vqm = _mm256_sub_pd(one, vq);
    const __m256d vup = _mm256_loadu_pd(v + i + 1);
    const __m256d vdn = _mm256_loadu_pd(v + i);
    _mm256_storeu_pd(
        out + i, _mm256_add_pd(_mm256_mul_pd(vq, vup), _mm256_mul_pd(vqm, vdn)));
  }
  for (; i < n; ++i) {
    const double qm = 1.0 - q[i];
    out[i] = q[i] * v[i + 1] + qm * v[i];
  }
}

void pos_neg_scale_v(const double* x, double a, double b, double* out,
                     std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vp = _mm256_max_pd(vx, zero);
    const __m256d vm = _mm256_min_pd(vx, zero);
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_mul_pd(va, vp), _mm256_mul_pd(vb, vm)));
  }
  for (; i < n; ++i) {
    const double p = x[i] > 0.0 ? x[i] : 0.0;
    const double m = x[i] < 0.0 ? x[i] : 0.0;
    out[i] = a * p + b * m;
  }
}

void max2_v(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(y + i),
                                            _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = x[i] < y[i] ? y[i] : x[i];
}

double min_reduce_v(const double* x, std::size_t n) {
  std::size_t i = 0;
  double m = x[0];
  if (n >= 4) {
    __m256d vm = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) vm = _mm256_min_pd(vm, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, vm);
    m = lanes[0];
    for (int k = 1; k < 4; ++k)
      if (lanes[k] < m) m = lanes[k];
  }
  for (; i < n; ++i)
    if (x[i] < m) m = x[i];
  return m;
}

double max_abs_diff_v(const double* x, const double* y, std::size_t n) {
  const __m256d signmask = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  double m = 0.0;
  if (n >= 4) {
    __m256d vm = _mm256_setzero_pd();
    for (; i + 4 <= n; i += 4) {
      const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
      vm = _mm256_max_pd(vm, _mm256_andnot_pd(signmask, d));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, vm);
    for (int k = 0; k < 4; ++k)
      if (lanes[k] > m) m = lanes[k];
  }
  for (; i < n; ++i) {
    const double d = std::fabs(x[i] - y[i]);
    if (d > m) m = d;
  }
  return m;
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{axpby_v,      weighted_adjacent_v,
                                 pos_neg_scale_v, max2_v,
                                 min_reduce_v, max_abs_diff_v,
                                 "avx2"};
  return table;
}

bool cpu_has_avx2() { return __builtin_cpu_supports("avx2") != 0; }

}  // namespace finlat::simd

#endif  // x86_64
