#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "tokidx/rng.hpp"

namespace tokidx {

// Dense row-major tensor of doubles with an explicit shape record. No
// implicit broadcasting; shape mismatches throw.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  // Rank-1 literal, e.g. Tensor::vec({3.0, 4.0}).
  static Tensor vec(std::initializer_list<double> values);
  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor random_normal(std::vector<std::size_t> shape, Rng& rng, double mean, double stddev);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double* row(std::size_t i);
  const double* row(std::size_t i) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double v);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Element-wise arithmetic (shapes must match exactly).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
void add_inplace(Tensor& dst, const Tensor& src);
void axpy_inplace(Tensor& dst, double a, const Tensor& x);

double dot(const Tensor& a, const Tensor& b);
double sum(const Tensor& a);
double l2_norm(const Tensor& a);
// Population standard deviation over all elements.
double stddev(const Tensor& a);

// Row-major matrix products; all operands rank-2.
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T -> [m,n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // [m,k]^T x [m,n] -> [k,n]

// out_i = w_i * x_i / sqrt(mean(x^2) + eps), rank-1 inputs of equal length.
Tensor rmsnorm(const Tensor& x, const Tensor& weight, double eps);

// out = u / (||u||_2 + eps); eps > 0 keeps the zero vector a fixed point.
Tensor l2norm_eps(const Tensor& u, double eps);

// Indices of the k largest values. Ties break toward the smaller index; the
// result is sorted ascending by index. Throws if k is 0 or exceeds n.
std::vector<std::size_t> topk(const Tensor& values, std::size_t k);

bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace tokidx
