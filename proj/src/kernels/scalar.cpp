#include "kernel_variants.hpp"

namespace tstr::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) noexcept {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) {
      const double p = a[i + j] * b[i + j];
      acc[j] = acc[j] + p;
    }
  }
  double s[4];
  for (std::size_t j = 0; j < 4; ++j) s[j] = acc[j] + acc[j + 4];
  double total = (s[0] + s[1]) + (s[2] + s[3]);
  for (; i < n; ++i) {
    const double p = a[i] * b[i];
    total = total + p;
  }
  return total;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) {
    const double p = alpha * x[i];
    y[i] = y[i] + p;
  }
}

void dot_rows_scalar(const double* w, std::size_t stride, const double* x, std::size_t n, std::size_t rows,
                     double* out) noexcept {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_scalar(w + r * stride, x, n);
}

void dot_rows2_scalar(const double* w, std::size_t stride, const double* x1, const double* x2, std::size_t n,
                      std::size_t rows, double* out1, double* out2) noexcept {
  for (std::size_t r = 0; r < rows; ++r) {
    out1[r] = dot_scalar(w + r * stride, x1, n);
    out2[r] = dot_scalar(w + r * stride, x2, n);
  }
}

void axpy2_scalar(double a1, const double* x1, double a2, const double* x2, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) {
    const double p1 = a1 * x1[i];
    const double p2 = a2 * x2[i];
    y[i] = (y[i] + p1) + p2;
  }
}

}  // namespace tstr::kernels::detail
