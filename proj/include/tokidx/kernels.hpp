#pragma once

#include <cstddef>

// Low-level array kernels with runtime backend selection.
//
// Every backend implements the same fixed arithmetic contract so that results
// are bit-identical across backends:
//   * element-wise kernels evaluate the same expression per element, with no
//     fused multiply-add;
//   * reductions (dot, sum) accumulate in four independent lanes over the
//     main body (lane j takes elements j, j+4, j+8, ...), combine them as
//     (l0 + l1) + (l2 + l3), then fold the tail [4*(n/4), n) in sequentially.
//
// Backend selection happens once, at first use: AVX2 when the CPU supports
// it, scalar otherwise. The TOKIDX_KERNELS environment variable ("scalar" or
// "avx2") overrides the choice.

namespace tokidx::kern {

struct Ops {
  const char* name;
  // out[i] = a[i] + b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] - b[i]
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] * b[i]
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] * c
  void (*scale)(const double* a, double c, double* out, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
};

const Ops& scalar_ops();

bool avx2_available();
// Valid to call only when avx2_available().
const Ops& avx2_ops();

// Backend chosen at first call (see header comment).
const Ops& active();

}  // namespace tokidx::kern
