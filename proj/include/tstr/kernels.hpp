#pragma once

// Dense float64 kernels behind the transform and retrieval inner loops.
//
// Every variant follows one canonical evaluation order: dot products keep
// eight strided partial sums (lane j accumulates elements i with
// i % 8 == j over the full blocks), fold lanes j and j + 4, combine the four
// results as (s0 + s1) + (s2 + s3) and then add the tail elements in order.
// Multiplies and adds are never fused. Under that contract the scalar
// reference and the vector variants agree bitwise, so artifacts do not
// depend on which instruction set the dispatcher picked.

#include <cstddef>
#include <span>
#include <string_view>

namespace tstr::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa) noexcept;

/// Instruction set used by the dispatched entry points below.
Isa active_isa() noexcept;

/// Best instruction set supported by this CPU and compiled into the binary.
Isa detected_isa() noexcept;

/// Pins dispatch (for equivalence tests and benchmarking). Requesting an
/// unavailable ISA falls back to scalar. Returns the ISA actually selected.
Isa force_isa(Isa isa) noexcept;

/// Row-major rows x cols matrix view.
struct MatrixView {
  const double* data;
  std::size_t rows;
  std::size_t cols;

  std::span<const double> row(std::size_t r) const noexcept { return {data + r * cols, cols}; }
};

double dot(std::span<const double> a, std::span<const double> b) noexcept;

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept;

/// out = w * x + bias (bias may be empty).
void matvec(MatrixView w, std::span<const double> x, std::span<const double> bias,
            std::span<double> out) noexcept;

/// out = w^T * g, accumulated row by row.
void matvec_transposed(MatrixView w, std::span<const double> g, std::span<double> out) noexcept;

/// grad += g x^T, where grad is rows x cols row-major with rows = |g|, cols = |x|.
void add_outer(std::span<const double> g, std::span<const double> x, std::span<double> grad) noexcept;

/// Two-input forms of the three kernels above. Each weight row is read once
/// for both inputs; results equal two separate calls bitwise (for the outer
/// product: the first update applied before the second).
void matvec_pair(MatrixView w, std::span<const double> x1, std::span<const double> x2, std::span<const double> bias,
                 std::span<double> out1, std::span<double> out2) noexcept;
void matvec_transposed_pair(MatrixView w, std::span<const double> g1, std::span<const double> g2,
                            std::span<double> out1, std::span<double> out2) noexcept;
void add_outer_pair(std::span<const double> g1, std::span<const double> x1, std::span<const double> g2,
                    std::span<const double> x2, std::span<double> grad) noexcept;

/// Per-ISA entry points, exposed so tests can compare variants directly.
struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n) noexcept;
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n) noexcept;
  /// out[r] = dot(w + r * stride, x, n) for r < rows.
  void (*dot_rows)(const double* w, std::size_t stride, const double* x, std::size_t n, std::size_t rows,
                   double* out) noexcept;
  /// dot_rows against two inputs at once.
  void (*dot_rows2)(const double* w, std::size_t stride, const double* x1, const double* x2, std::size_t n,
                    std::size_t rows, double* out1, double* out2) noexcept;
  /// y = (y + a1 * x1) + a2 * x2, elementwise.
  void (*axpy2)(double a1, const double* x1, double a2, const double* x2, double* y, std::size_t n) noexcept;
};

const KernelTable& scalar_table() noexcept;
/// nullptr when the variant is not compiled in or not supported by the CPU.
const KernelTable* avx2_table() noexcept;
const KernelTable* neon_table() noexcept;

}  // namespace tstr::kernels
