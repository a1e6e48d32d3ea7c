#pragma once

#include <span>

#include "bamp/matrix.hpp"

namespace bamp::linalg {

/// Lower-triangular Cholesky factor L with A = L L^T.
/// Throws ComputationError when A is not numerically positive definite.
Matrix cholesky(const Matrix& a);

/// Solves L L^T X = B in place of B (B is n x m).
void cholesky_solve(const Matrix& lower, Matrix& rhs);

/// Inverse of a symmetric positive-definite matrix; the result is exactly symmetric.
Matrix spd_inverse(const Matrix& a);

/// Column means of the rows of `samples`.
Vector mean_rows(const Matrix& samples);

/// Unbiased (n - 1) sample covariance of the rows; exactly symmetric.
/// Fewer than two rows yields the zero matrix.
Matrix covariance_rows(const Matrix& samples);

Matrix matmul(const Matrix& a, const Matrix& b);

bool all_finite(std::span<const double> values);

}  // namespace bamp::linalg
