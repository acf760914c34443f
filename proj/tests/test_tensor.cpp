#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tokidx/rng.hpp"
#include "tokidx/tensor.hpp"

using namespace tokidx;

TEST_CASE("rmsnorm: constant vector normalizes to the weight") {
  const Tensor x = Tensor::vec({2.0, 2.0, 2.0, 2.0});
  const Tensor w = Tensor::full({4}, 1.0);
  const Tensor y = rmsnorm(x, w, 0.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rmsnorm: zero vector is a fixed point with eps") {
  const Tensor x = Tensor::vec({0.0, 0.0, 0.0});
  const Tensor y = rmsnorm(x, Tensor::full({3}, 1.0), 1e-6);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("rmsnorm: (1,2,3) against the direct evaluation oracle") {
  const Tensor x = Tensor::vec({1.0, 2.0, 3.0});
  const Tensor y = rmsnorm(x, Tensor::full({3}, 1.0), 0.0);
  // x_i / sqrt(mean(x^2)) with mean(x^2) = 14/3, evaluated in long double.
  const long double root = std::sqrt(14.0L / 3.0L);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(y[i] == doctest::Approx(static_cast<double>((i + 1) / root)).epsilon(1e-15));
  CHECK(y[0] == doctest::Approx(0.46291004988627573).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(0.92582009977255146).epsilon(1e-15));
  CHECK(y[2] == doctest::Approx(1.3887301496588272).epsilon(1e-15));
}

TEST_CASE("rmsnorm: shape mismatch throws") {
  CHECK_THROWS_AS(rmsnorm(Tensor::vec({1.0, 2.0}), Tensor::vec({1.0, 1.0, 1.0}), 1e-6),
                  std::invalid_argument);
}

TEST_CASE("l2norm_eps: 3-4-5 triangle") {
  const Tensor y = l2norm_eps(Tensor::vec({3.0, 4.0}), 0.0);
  CHECK(y[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("l2norm_eps: zero maps to zero without blowing up") {
  const Tensor y = l2norm_eps(Tensor::vec({0.0, 0.0, 0.0}), 1e-6);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("l2norm_eps: unit vector is a fixed point at eps 0") {
  const Tensor y = l2norm_eps(Tensor::vec({1.0, 0.0, 0.0}), 0.0);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 0.0);
}

TEST_CASE("l2norm_eps: output norm at most 1, strictly below for eps > 0") {
  Rng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.pick(16);
    Tensor u({n});
    for (std::size_t i = 0; i < n; ++i) u[i] = rng.uniform(-5.0, 5.0);
    const double norm_out = l2_norm(l2norm_eps(u, 1e-6));
    CHECK(norm_out <= 1.0);
    if (l2_norm(u) > 0.0) CHECK(norm_out < 1.0);
  }
}

TEST_CASE("topk: basic selections and tie-breaks") {
  CHECK(topk(Tensor::vec({2.0, 0.0, -1.0}), 2) == std::vector<std::size_t>{0, 1});
  CHECK(topk(Tensor::vec({5.0, 5.0, 5.0}), 2) == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(topk(Tensor::vec({1.0, 2.0}), 3), std::invalid_argument);
}

TEST_CASE("topk: matches a full-sort oracle on random vectors") {
  Rng rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor v({10});
    for (std::size_t i = 0; i < 10; ++i) v[i] = rng.uniform(-1.0, 1.0);
    const auto got = topk(v, 3);
    // Oracle: stable sort of indices by descending value.
    std::vector<std::size_t> idx(10);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    std::vector<std::size_t> expect(idx.begin(), idx.begin() + 3);
    std::sort(expect.begin(), expect.end());
    CHECK(got == expect);
  }
}

TEST_CASE("topk: permutation consistency of the selected value multiset") {
  Rng rng(17);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 4 + rng.pick(12);
    const std::size_t k = 1 + rng.pick(n);
    Tensor v({n});
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.pick(i)]);
    Tensor pv({n});
    for (std::size_t i = 0; i < n; ++i) pv[perm[i]] = v[i];

    auto values_of = [](const Tensor& t, const std::vector<std::size_t>& sel) {
      std::vector<double> vals;
      for (std::size_t i : sel) vals.push_back(t[i]);
      std::sort(vals.begin(), vals.end());
      return vals;
    };
    CHECK(values_of(v, topk(v, k)) == values_of(pv, topk(pv, k)));
  }
}

TEST_CASE("matmul agrees with an explicit triple-loop oracle") {
  Rng rng(19);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t m = 1 + rng.pick(6), k = 1 + rng.pick(6), n = 1 + rng.pick(6);
    Tensor a = Tensor::random_normal({m, k}, rng, 0.0, 1.0);
    Tensor b = Tensor::random_normal({k, n}, rng, 0.0, 1.0);
    const Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
        CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
      }
  }
}

TEST_CASE("matmul_nt and matmul_tn are transpose-consistent with matmul") {
  Rng rng(23);
  Tensor a = Tensor::random_normal({5, 7}, rng, 0.0, 1.0);
  Tensor b = Tensor::random_normal({4, 7}, rng, 0.0, 1.0);
  Tensor bt({7, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 7; ++j) bt.at(j, i) = b.at(i, j);
  const Tensor via_nt = matmul_nt(a, b);
  const Tensor via_mm = matmul(a, bt);
  for (std::size_t i = 0; i < via_nt.size(); ++i)
    CHECK(via_nt[i] == doctest::Approx(via_mm[i]).epsilon(1e-12));

  Tensor c = Tensor::random_normal({5, 3}, rng, 0.0, 1.0);
  Tensor at({7, 5});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 7; ++j) at.at(j, i) = a.at(i, j);
  const Tensor via_tn = matmul_tn(a, c);
  const Tensor via_mm2 = matmul(at, c);
  for (std::size_t i = 0; i < via_tn.size(); ++i)
    CHECK(via_tn[i] == doctest::Approx(via_mm2[i]).epsilon(1e-12));
}

TEST_CASE("shape mismatches throw across elementwise ops") {
  const Tensor a({2, 3});
  const Tensor b({3, 2});
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(hadamard(a, b), std::invalid_argument);
  CHECK_THROWS_AS(dot(a, b), std::invalid_argument);
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), std::invalid_argument);
}

TEST_CASE("tensor invariant: shape product equals data length") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
  const Tensor t({2, 3});
  CHECK(t.size() == 6);
}
