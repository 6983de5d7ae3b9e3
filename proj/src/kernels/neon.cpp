// AArch64 Advanced SIMD variant. vmul/vadd are kept separate (no vfma) to
// preserve the canonical rounding sequence.
#include <arm_neon.h>

#include "kernel_variants.hpp"

namespace tstr::kernels::detail {

double dot_neon(const double* a, const double* b, std::size_t n) noexcept {
  float64x2_t q0 = vdupq_n_f64(0.0);  // lanes 0,1
  float64x2_t q1 = vdupq_n_f64(0.0);  // lanes 2,3
  float64x2_t q2 = vdupq_n_f64(0.0);  // lanes 4,5
  float64x2_t q3 = vdupq_n_f64(0.0);  // lanes 6,7
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    q0 = vaddq_f64(q0, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    q1 = vaddq_f64(q1, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
    q2 = vaddq_f64(q2, vmulq_f64(vld1q_f64(a + i + 4), vld1q_f64(b + i + 4)));
    q3 = vaddq_f64(q3, vmulq_f64(vld1q_f64(a + i + 6), vld1q_f64(b + i + 6)));
  }
  const float64x2_t s01 = vaddq_f64(q0, q2);
  const float64x2_t s23 = vaddq_f64(q1, q3);
  double total = (vgetq_lane_f64(s01, 0) + vgetq_lane_f64(s01, 1)) +
                 (vgetq_lane_f64(s23, 0) + vgetq_lane_f64(s23, 1));
  for (; i < n; ++i) {
    const double p = a[i] * b[i];
    total = total + p;
  }
  return total;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) noexcept {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t p = vmulq_f64(va, vld1q_f64(x + i));
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), p));
  }
  for (; i < n; ++i) {
    const double p = alpha * x[i];
    y[i] = y[i] + p;
  }
}

void dot_rows_neon(const double* w, std::size_t stride, const double* x, std::size_t n, std::size_t rows,
                   double* out) noexcept {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_neon(w + r * stride, x, n);
}

void dot_rows2_neon(const double* w, std::size_t stride, const double* x1, const double* x2, std::size_t n,
                    std::size_t rows, double* out1, double* out2) noexcept {
  for (std::size_t r = 0; r < rows; ++r) {
    out1[r] = dot_neon(w + r * stride, x1, n);
    out2[r] = dot_neon(w + r * stride, x2, n);
  }
}

void axpy2_neon(double a1, const double* x1, double a2, const double* x2, double* y, std::size_t n) noexcept {
  const float64x2_t v1 = vdupq_n_f64(a1);
  const float64x2_t v2 = vdupq_n_f64(a2);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t p1 = vmulq_f64(v1, vld1q_f64(x1 + i));
    const float64x2_t p2 = vmulq_f64(v2, vld1q_f64(x2 + i));
    vst1q_f64(y + i, vaddq_f64(vaddq_f64(vld1q_f64(y + i), p1), p2));
  }
  for (; i < n; ++i) {
    const double p1 = a1 * x1[i];
    const double p2 = a2 * x2[i];
    y[i] = (y[i] + p1) + p2;
  }
}

}  // namespace tstr::kernels::detail
