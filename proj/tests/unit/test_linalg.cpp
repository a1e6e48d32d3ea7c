#include <doctest.h>

#include "bamp/errors.hpp"
#include "bamp/linalg.hpp"
#include "bamp/random.hpp"
#include "oracles.hpp"

using namespace bamp;

namespace {

Matrix random_spd(Rng& rng, std::size_t n) {
  Matrix a(n, n);
  for (double& v : a.storage()) v = rng.normal();
  Matrix spd(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < n; ++p) spd(i, j) += a(p, i) * a(p, j);
    }
    spd(i, i) += 0.5;
  }
  return spd;
}

oracle::Mat to_oracle(const Matrix& m) {
  oracle::Mat out(m.rows(), oracle::Vec(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

}  // namespace

TEST_CASE("cholesky reconstructs the matrix") {
  Rng rng(3);
  const Matrix a = random_spd(rng, 9);
  const Matrix l = linalg::cholesky(a);
  for (std::size_t i = 0; i < 9; ++i) {
    for (std::size_t j = i + 1; j < 9; ++j) CHECK(l(i, j) == 0.0);
    for (std::size_t j = 0; j < 9; ++j) {
      double v = 0.0;
      for (std::size_t p = 0; p < 9; ++p) v += l(i, p) * l(j, p);
      CHECK(v == doctest::Approx(a(i, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("cholesky rejects an indefinite matrix") {
  Matrix a(2, 2);
  a(0, 0) = 1.0;
  a(0, 1) = a(1, 0) = 2.0;
  a(1, 1) = 1.0;
  CHECK_THROWS_AS(linalg::cholesky(a), ComputationError);
}

TEST_CASE("spd inverse agrees with Gauss-Jordan and is symmetric") {
  Rng rng(4);
  for (std::size_t n : {1u, 2u, 5u, 16u}) {
    const Matrix a = random_spd(rng, n);
    const Matrix inv = linalg::spd_inverse(a);
    const auto ref = oracle::gauss_jordan_inverse(to_oracle(a));
    CHECK(oracle::max_abs_diff(to_oracle(inv), ref) < 1e-9);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) CHECK(inv(i, j) == inv(j, i));
    }
  }
}

TEST_CASE("covariance is unbiased and exactly symmetric") {
  Matrix two(2, 1);
  two(0, 0) = 0.0;
  two(1, 0) = 2.0;
  CHECK(linalg::covariance_rows(two)(0, 0) == 2.0);

  Matrix same(3, 2, 1.5);
  const Matrix zero = linalg::covariance_rows(same);
  for (double v : zero.storage()) CHECK(v == 0.0);

  Rng rng(5);
  Matrix samples(20, 6);
  for (double& v : samples.storage()) v = rng.normal();
  const Matrix cov = linalg::covariance_rows(samples);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) CHECK(cov(i, j) == cov(j, i));
  }
  CHECK(linalg::covariance_rows(Matrix(1, 3, 2.0)).storage() == std::vector<double>(9, 0.0));
}

TEST_CASE("matmul against hand values") {
  Matrix a(1, 2);
  a(0, 0) = 1;
  a(0, 1) = 2;
  Matrix b(2, 1);
  b(0, 0) = 3;
  b(1, 0) = 4;
  CHECK(linalg::matmul(a, b)(0, 0) == 11.0);
  CHECK_THROWS_AS(linalg::matmul(a, a), InputError);
}

TEST_CASE("mean of rows") {
  Matrix m(2, 2);
  m(0, 0) = 1;
  m(0, 1) = 2;
  m(1, 0) = 3;
  m(1, 1) = 6;
  const Vector mean = linalg::mean_rows(m);
  CHECK(mean[0] == 2.0);
  CHECK(mean[1] == 4.0);
}
