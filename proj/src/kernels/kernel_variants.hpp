#pragma once

#include <cstddef>

namespace tstr::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) noexcept;
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) noexcept;
void dot_rows_scalar(const double* w, std::size_t stride, const double* x, std::size_t n, std::size_t rows,
                     double* out) noexcept;
void dot_rows2_neon(const double* w, std::size_t stride, const double* x1, const double* x2, std::size_t n,
                    std::size_t rows, double* out1, double* out2) noexcept;
void axpy2_neon(double a1, const double* x1, double a2, const double* x2, double* y, std::size_t n) noexcept;
void dot_rows2_avx2(const double* w, std::size_t stride, const double* x1, const double* x2, std::size_t n,
                    std::size_t rows, double* out1, double* out2) noexcept;
void axpy2_avx2(double a1, const double* x1, double a2, const double* x2, double* y, std::size_t n) noexcept;
void dot_rows2_scalar(const double* w, std::size_t stride, const double* x1, const double* x2, std::size_t n,
                      std::size_t rows, double* out1, double* out2) noexcept;
void axpy2_scalar(double a1, const double* x1, double a2, const double* x2, double* y, std::size_t n) noexcept;

#if defined(TSTR_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n) noexcept;
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) noexcept;
void dot_rows_avx2(const double* w, std::size_t stride, const double* x, std::size_t n, std::size_t rows,
                   double* out) noexcept;
#endif

#if defined(TSTR_HAVE_NEON)
double dot_neon(const double* a, const double* b, std::size_t n) noexcept;
void axpy_neon(double alpha, const double* x, double* y, std::size_t n) noexcept;
void dot_rows_neon(const double* w, std::size_t stride, const double* x, std::size_t n, std::size_t rows,
                   double* out) noexcept;
#endif

}  // namespace tstr::kernels::detail
