#include "tokidx/kernels.hpp"

namespace tokidx::kern {
namespace {

void add_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_k(const double* a, double c, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

void axpy_k(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

double dot_k(const double* a, const double* b, std::size_t n) {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  std::size_t body = n - (n % 4);
  for (std::size_t i = 0; i < body; i += 4) {
    acc0 = acc0 + a[i + 0] * b[i + 0];
    acc1 = acc1 + a[i + 1] * b[i + 1];
    acc2 = acc2 + a[i + 2] * b[i + 2];
    acc3 = acc3 + a[i + 3] * b[i + 3];
  }
  double total = (acc0 + acc1) + (acc2 + acc3);
  for (std::size_t i = body; i < n; ++i) total = total + a[i] * b[i];
  return total;
}

double sum_k(const double* a, std::size_t n) {
  double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
  std::size_t body = n - (n % 4);
  for (std::size_t i = 0; i < body; i += 4) {
    acc0 = acc0 + a[i + 0];
    acc1 = acc1 + a[i + 1];
    acc2 = acc2 + a[i + 2];
    acc3 = acc3 + a[i + 3];
  }
  double total = (acc0 + acc1) + (acc2 + acc3);
  for (std::size_t i = body; i < n; ++i) total = total + a[i];
  return total;
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{"scalar", add_k, sub_k, mul_k, scale_k, axpy_k, dot_k, sum_k};
  return ops;
}

}  // namespace tokidx::kern
