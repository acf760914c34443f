// AVX2 kernel backend. Compiled with -mavx2 for this translation unit only;
// callers must gate on avx2_available(). Reduction order matches the scalar
// reference exactly (see kernels.hpp), so outputs are bit-identical.

#include "tokidx/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>

namespace tokidx::kern {
namespace {

void add_k(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t body = n - (n % 4);
  for (std::size_t i = 0; i < body; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = body; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_k(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t body = n - (n % 4);
  for (std::size_t i = 0; i < body; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = body; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_k(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t body = n - (n % 4);
  for (std::size_t i = 0; i < body; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = body; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_k(const double* a, double c, double* out, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t body = n - (n % 4);
  for (std::size_t i = 0; i < body; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vc));
  }
  for (std::size_t i = body; i < n; ++i) out[i] = a[i] * c;
}

void axpy_k(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t body = n - (n % 4);
  for (std::size_t i = 0; i < body; i += 4) {
    __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (std::size_t i = body; i < n; ++i) y[i] = y[i] + a * x[i];
}

// Combine four lanes as (l0 + l1) + (l2 + l3), matching the scalar reference.
double hsum_ordered(__m256d v) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, v);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

double dot_k(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t body = n - (n % 4);
  for (std::size_t i = 0; i < body; i += 4) {
    __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, prod);
  }
  double total = hsum_ordered(acc);
  for (std::size_t i = body; i < n; ++i) total = total + a[i] * b[i];
  return total;
}

double sum_k(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t body = n - (n % 4);
  for (std::size_t i = 0; i < body; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  }
  double total = hsum_ordered(acc);
  for (std::size_t i = body; i < n; ++i) total = total + a[i];
  return total;
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops{"avx2", add_k, sub_k, mul_k, scale_k, axpy_k, dot_k, sum_k};
  return ops;
}

}  // namespace tokidx::kern

#else  // non-x86: avx2_ops is never selected; satisfy the linker.

namespace tokidx::kern {
const Ops& avx2_ops() { return scalar_ops(); }
}  // namespace tokidx::kern

#endif
