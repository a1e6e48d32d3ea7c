#pragma once

#include <cstddef>

namespace bamp::kernels::scalar {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
void gemv_t(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
void rank1_update(double alpha, const double* x, std::size_t rows, const double* y,
                  std::size_t cols, double* a);
double quadratic_form(const double* a, const double* x, std::size_t n);
}  // namespace bamp::kernels::scalar

#if defined(BAMP_HAVE_AVX2)
namespace bamp::kernels::avx2 {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
void gemv_t(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
void rank1_update(double alpha, const double* x, std::size_t rows, const double* y,
                  std::size_t cols, double* a);
double quadratic_form(const double* a, const double* x, std::size_t n);
}  // namespace bamp::kernels::avx2
#endif
