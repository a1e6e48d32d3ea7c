#include "bamp/linalg.hpp"

#include <cmath>
#include <string>

#include "bamp/errors.hpp"
#include "bamp/kernels.hpp"

namespace bamp::linalg {

Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw InputError("cholesky: matrix is not square");
  const auto& k = kernels::active_kernels();
  Matrix lower(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double partial = k.dot(lower.row(i).data(), lower.row(j).data(), j);
      const double value = a(i, j) - partial;
      if (i == j) {
        if (!(value > 0.0) || !std::isfinite(value)) {
          throw ComputationError("cholesky: matrix not positive definite at pivot " +
                                 std::to_string(i));
        }
        lower(i, i) = std::sqrt(value);
      } else {
        lower(i, j) = value / lower(j, j);
      }
    }
  }
  return lower;
}

void cholesky_solve(const Matrix& lower, Matrix& rhs) {
  const std::size_t n = lower.rows();
  if (rhs.rows() != n) throw InputError("cholesky_solve: dimension mismatch");
  const std::size_t m = rhs.cols();
  const auto& k = kernels::active_kernels();
  // Forward substitution, row-oriented so updates are contiguous axpys.
  for (std::size_t i = 0; i < n; ++i) {
    auto target = rhs.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const double l = lower(i, j);
      if (l != 0.0) k.axpy(-l, rhs.row(j).data(), target.data(), m);
    }
    const double inv = 1.0 / lower(i, i);
    for (double& v : target) v *= inv;
  }
  // Backward substitution with L^T.
  for (std::size_t ii = n; ii-- > 0;) {
    auto target = rhs.row(ii);
    for (std::size_t j = ii + 1; j < n; ++j) {
      const double l = lower(j, ii);
      if (l != 0.0) k.axpy(-l, rhs.row(j).data(), target.data(), m);
    }
    const double inv = 1.0 / lower(ii, ii);
    for (double& v : target) v *= inv;
  }
}

Matrix spd_inverse(const Matrix& a) {
  const Matrix lower = cholesky(a);
  Matrix inverse = Matrix::identity(a.rows());
  cholesky_solve(lower, inverse);
  for (std::size_t i = 0; i < inverse.rows(); ++i) {
    for (std::size_t j = i + 1; j < inverse.cols(); ++j) {
      const double avg = 0.5 * (inverse(i, j) + inverse(j, i));
      inverse(i, j) = avg;
      inverse(j, i) = avg;
    }
  }
  return inverse;
}

Vector mean_rows(const Matrix& samples) {
  Vector mean(samples.cols(), 0.0);
  if (samples.rows() == 0) return mean;
  for (std::size_t r = 0; r < samples.rows(); ++r) kernels::axpy(1.0, samples.row(r), mean);
  const double inv = 1.0 / static_cast<double>(samples.rows());
  for (double& v : mean) v *= inv;
  return mean;
}

Matrix covariance_rows(const Matrix& samples) {
  const std::size_t d = samples.cols();
  Matrix cov(d, d);
  if (samples.rows() < 2) return cov;
  const Vector mean = mean_rows(samples);
  Vector centered(d);
  const auto& k = kernels::active_kernels();
  for (std::size_t r = 0; r < samples.rows(); ++r) {
    const auto row = samples.row(r);
    for (std::size_t i = 0; i < d; ++i) centered[i] = row[i] - mean[i];
    k.rank1_update(1.0, centered.data(), d, centered.data(), d, cov.data());
  }
  const double inv = 1.0 / static_cast<double>(samples.rows() - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      const double v = 0.5 * (cov(i, j) + cov(j, i)) * inv;
      cov(i, j) = v;
      cov(j, i) = v;
    }
  }
  return cov;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InputError("matmul: dimension mismatch");
  Matrix out(a.rows(), b.cols());
  const auto& k = kernels::active_kernels();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t p = 0; p < a.cols(); ++p) {
      k.axpy(a(i, p), b.row(p).data(), out.row(i).data(), b.cols());
    }
  }
  return out;
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace bamp::linalg
