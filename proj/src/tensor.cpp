#include "tokidx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "tokidx/kernels.hpp"

namespace tokidx {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) {
    if (s == 0) throw std::invalid_argument("tensor shape has a zero dimension");
    n *= s;
  }
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size())
    throw std::invalid_argument("tensor data length does not match shape");
}

Tensor Tensor::vec(std::initializer_list<double> values) {
  if (values.size() == 0) throw std::invalid_argument("empty tensor literal");
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::random_normal(std::vector<std::size_t> shape, Rng& rng, double mean,
                             double stddev) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(mean, stddev);
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw std::invalid_argument("rows(): tensor is not rank-2");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw std::invalid_argument("cols(): tensor is not rank-2");
  return shape_[1];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

double* Tensor::row(std::size_t i) { return data_.data() + i * cols(); }
const double* Tensor::row(std::size_t i) const { return data_.data() + i * cols(); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  kern::active().add(a.data(), b.data(), out.data(), a.size());
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  kern::active().sub(a.data(), b.data(), out.data(), a.size());
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  kern::active().mul(a.data(), b.data(), out.data(), a.size());
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  kern::active().scale(a.data(), c, out.data(), a.size());
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  require_same_shape(dst, src, "add_inplace");
  kern::active().add(dst.data(), src.data(), dst.data(), dst.size());
}

void axpy_inplace(Tensor& dst, double a, const Tensor& x) {
  require_same_shape(dst, x, "axpy_inplace");
  kern::active().axpy(a, x.data(), dst.data(), dst.size());
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  return kern::active().dot(a.data(), b.data(), a.size());
}

double sum(const Tensor& a) { return kern::active().sum(a.data(), a.size()); }

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double stddev(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  const double mean = sum(a) / n;
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - mean;
    acc += d * d;
  }
  return std::sqrt(acc / n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw std::invalid_argument("matmul: incompatible shapes");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  const auto& ops = kern::active();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      ops.axpy(a.at(i, p), b.row(p), crow, n);
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: incompatible shapes");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor c({m, n});
  const auto& ops = kern::active();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c.at(i, j) = ops.dot(a.row(i), b.row(j), k);
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows())
    throw std::invalid_argument("matmul_tn: incompatible shapes");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({k, n});
  const auto& ops = kern::active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = b.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      ops.axpy(a.at(i, p), grow, c.row(p), n);
    }
  }
  return c;
}

Tensor rmsnorm(const Tensor& x, const Tensor& weight, double eps) {
  if (x.rank() != 1 || !x.same_shape(weight))
    throw std::invalid_argument("rmsnorm: expects rank-1 x and weight of equal length");
  if (eps < 0.0) throw std::invalid_argument("rmsnorm: eps must be non-negative");
  const std::size_t d = x.size();
  const double ms = dot(x, x) / static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(ms + eps);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < d; ++i) out[i] = weight[i] * (x[i] * inv);
  return out;
}

Tensor l2norm_eps(const Tensor& u, double eps) {
  if (eps < 0.0) throw std::invalid_argument("l2norm_eps: eps must be non-negative");
  const double denom = l2_norm(u) + eps;
  if (denom == 0.0) return Tensor::zeros(u.shape());  // eps == 0 and u == 0
  return scale(u, 1.0 / denom);
}

std::vector<std::size_t> topk(const Tensor& values, std::size_t k) {
  const std::size_t n = values.size();
  if (k == 0 || k > n) throw std::invalid_argument("topk: k out of range");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace tokidx
