#pragma once

// Data-parallel inner loops shared by every module.
//
// Each kernel has a scalar reference implementation and, where the CPU
// supports it, an AVX2+FMA variant. The variant is chosen once at startup
// (see active_kernels()) and can be forced to the scalar path by setting
// BAMP_SIMD=scalar in the environment. All matrices are dense row-major.

#include <cstddef>
#include <span>

namespace bamp::kernels {

struct KernelTable {
  const char* name;

  /// sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  /// y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// y = A x, A is rows x cols
  void (*gemv)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
  /// y = A^T x, A is rows x cols, y has cols entries
  void (*gemv_t)(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
  /// A += alpha * x y^T, A is rows x cols
  void (*rank1_update)(double alpha, const double* x, std::size_t rows, const double* y,
                       std::size_t cols, double* a);
  /// x^T A x with A n x n
  double (*quadratic_form)(const double* a, const double* x, std::size_t n);
};

const KernelTable& scalar_kernels();

/// AVX2+FMA table, or nullptr when the build or the CPU lacks support.
const KernelTable* avx2_kernels();

/// Table selected for this process.
const KernelTable& active_kernels();

// Convenience wrappers over the active table.

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active_kernels().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active_kernels().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active_kernels().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace bamp::kernels
