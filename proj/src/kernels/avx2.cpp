// Compiled with -mavx2 (no FMA); only reached after a runtime CPU check.
#include <immintrin.h>

#include "kernel_variants.hpp"

namespace tstr::kernels::detail {

namespace {

// Folds the two accumulators in canonical order, then adds the tail.
double finish(__m256d lo, __m256d hi, const double* a, const double* b, std::size_t i, std::size_t n) noexcept {
  alignas(32) double s[4];
  _mm256_store_pd(s, _mm256_add_pd(lo, hi));
  double total = (s[0] + s[1]) + (s[2] + s[3]);
  for (; i < n; ++i) {
    const double p = a[i] * b[i];
    total = total + p;
  }
  return total;
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) noexcept {
  __m256d lo = _mm256_setzero_pd();  // lanes 0..3
  __m256d hi = _mm256_setzero_pd();  // lanes 4..7
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    lo = _mm256_add_pd(lo, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    hi = _mm256_add_pd(hi, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  return finish(lo, hi, a, b, i, n);
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) noexcept {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), p));
  }
  for (; i < n; ++i) {
    const double p = alpha * x[i];
    y[i] = y[i] + p;
  }
}

// Four rows at a time: eight independent accumulators hide the add latency
// while each row keeps the exact lane order of dot_avx2.
void dot_rows_avx2(const double* w, std::size_t stride, const double* x, std::size_t n, std::size_t rows,
                   double* out) noexcept {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* w0 = w + r * stride;
    const double* w1 = w0 + stride;
    const double* w2 = w1 + stride;
    const double* w3 = w2 + stride;
    __m256d lo0 = _mm256_setzero_pd(), hi0 = _mm256_setzero_pd();
    __m256d lo1 = _mm256_setzero_pd(), hi1 = _mm256_setzero_pd();
    __m256d lo2 = _mm256_setzero_pd(), hi2 = _mm256_setzero_pd();
    __m256d lo3 = _mm256_setzero_pd(), hi3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
      const __m256d xl = _mm256_loadu_pd(x + i);
      const __m256d xh = _mm256_loadu_pd(x + i + 4);
      lo0 = _mm256_add_pd(lo0, _mm256_mul_pd(_mm256_loadu_pd(w0 + i), xl));
      hi0 = _mm256_add_pd(hi0, _mm256_mul_pd(_mm256_loadu_pd(w0 + i + 4), xh));
      lo1 = _mm256_add_pd(lo1, _mm256_mul_pd(_mm256_loadu_pd(w1 + i), xl));
      hi1 = _mm256_add_pd(hi1, _mm256_mul_pd(_mm256_loadu_pd(w1 + i + 4), xh));
      lo2 = _mm256_add_pd(lo2, _mm256_mul_pd(_mm256_loadu_pd(w2 + i), xl));
      hi2 = _mm256_add_pd(hi2, _mm256_mul_pd(_mm256_loadu_pd(w2 + i + 4), xh));
      lo3 = _mm256_add_pd(lo3, _mm256_mul_pd(_mm256_loadu_pd(w3 + i), xl));
      hi3 = _mm256_add_pd(hi3, _mm256_mul_pd(_mm256_loadu_pd(w3 + i + 4), xh));
    }
    out[r] = finish(lo0, hi0, w0, x, i, n);
    out[r + 1] = finish(lo1, hi1, w1, x, i, n);
    out[r + 2] = finish(lo2, hi2, w2, x, i, n);
    out[r + 3] = finish(lo3, hi3, w3, x, i, n);
  }
  for (; r < rows; ++r) out[r] = dot_avx2(w + r * stride, x, n);
}

// Two rows against two inputs: four dot products in flight.
void dot_rows2_avx2(const double* w, std::size_t stride, const double* x1, const double* x2, std::size_t n,
                    std::size_t rows, double* out1, double* out2) noexcept {
  std::size_t r = 0;
  for (; r + 2 <= rows; r += 2) {
    const double* w0 = w + r * stride;
    const double* w1 = w0 + stride;
    __m256d lo00 = _mm256_setzero_pd(), hi00 = _mm256_setzero_pd();
    __m256d lo01 = _mm256_setzero_pd(), hi01 = _mm256_setzero_pd();
    __m256d lo10 = _mm256_setzero_pd(), hi10 = _mm256_setzero_pd();
    __m256d lo11 = _mm256_setzero_pd(), hi11 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
      const __m256d al = _mm256_loadu_pd(x1 + i), ah = _mm256_loadu_pd(x1 + i + 4);
      const __m256d bl = _mm256_loadu_pd(x2 + i), bh = _mm256_loadu_pd(x2 + i + 4);
      const __m256d wl0 = _mm256_loadu_pd(w0 + i), wh0 = _mm256_loadu_pd(w0 + i + 4);
      const __m256d wl1 = _mm256_loadu_pd(w1 + i), wh1 = _mm256_loadu_pd(w1 + i + 4);
      lo00 = _mm256_add_pd(lo00, _mm256_mul_pd(wl0, al));
      hi00 = _mm256_add_pd(hi00, _mm256_mul_pd(wh0, ah));
      lo01 = _mm256_add_pd(lo01, _mm256_mul_pd(wl0, bl));
      hi01 = _mm256_add_pd(hi01, _mm256_mul_pd(wh0, bh));
      lo10 = _mm256_add_pd(lo10, _mm256_mul_pd(wl1, al));
      hi10 = _mm256_add_pd(hi10, _mm256_mul_pd(wh1, ah));
      lo11 = _mm256_add_pd(lo11, _mm256_mul_pd(wl1, bl));
      hi11 = _mm256_add_pd(hi11, _mm256_mul_pd(wh1, bh));
    }
    out1[r] = finish(lo00, hi00, w0, x1, i, n);
    out2[r] = finish(lo01, hi01, w0, x2, i, n);
    out1[r + 1] = finish(lo10, hi10, w1, x1, i, n);
    out2[r + 1] = finish(lo11, hi11, w1, x2, i, n);
  }
  for (; r < rows; ++r) {
    out1[r] = dot_avx2(w + r * stride, x1, n);
    out2[r] = dot_avx2(w + r * stride, x2, n);
  }
}

void axpy2_avx2(double a1, const double* x1, double a2, const double* x2, double* y, std::size_t n) noexcept {
  const __m256d v1 = _mm256_set1_pd(a1);
  const __m256d v2 = _mm256_set1_pd(a2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p1 = _mm256_mul_pd(v1, _mm256_loadu_pd(x1 + i));
    const __m256d p2 = _mm256_mul_pd(v2, _mm256_loadu_pd(x2 + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_add_pd(_mm256_loadu_pd(y + i), p1), p2));
  }
  for (; i < n; ++i) {
    const double p1 = a1 * x1[i];
    const double p2 = a2 * x2[i];
    y[i] = (y[i] + p1) + p2;
  }
}

}  // namespace tstr::kernels::detail
