// Scalar reference kernels. The expression shapes here are the contract:
// the AVX2 variants must perform the same operations in the same order
// per element.

#include "finlat/simd/kernels.hpp"

#include <cmath>

namespace finlat::simd {
namespace {

void axpby_s(double a, const double* x, double b, const double* y, double* out,
             std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void weighted_adjacent_s(const double* q, const double* v, double* out,
                         std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double qm = 1.0 - q[i];
    out[i] = q[i] * v[i + 1] + qm * v[i];
  }
}

void pos_neg_scale_s(const double* x, double a, double b, double* out,
                     std::size_t n) {
  // Branch shapes mirror maxpd/minpd against +0.0, so x = -0.0 lands in
  // the same lane as it does in the vector variant.
  for (std::size_t i = 0; i < n; ++i) {
    const double p = x[i] > 0.0 ? x[i] : 0.0;
    const double m = x[i] < 0.0 ? x[i] : 0.0;
    out[i] = a * p + b * m;
  }
}

void max2_s(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] < y[i] ? y[i] : x[i];
}

double min_reduce_s(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] < m) m = x[i];
  return m;
}

double max_abs_diff_s(const double* x, const double* y, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::fabs(x[i] - y[i]);
    if (d > m) m = d;
  }
  return m;
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{axpby_s,      weighted_adjacent_s,
                                 pos_neg_scale_s, max2_s,
                                 min_reduce_s, max_abs_diff_s,
                                 "scalar"};
  return table;
}

}  // namespace finlat::simd
