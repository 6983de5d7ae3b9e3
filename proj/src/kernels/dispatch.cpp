#include <atomic>
#include <cassert>

#include "kernel_variants.hpp"
#include "tstr/kernels.hpp"

namespace tstr::kernels {

namespace {

constexpr KernelTable kScalar{&detail::dot_scalar, &detail::axpy_scalar, &detail::dot_rows_scalar, &detail::dot_rows2_scalar,
                               &detail::axpy2_scalar};
#if defined(TSTR_HAVE_AVX2)
constexpr KernelTable kAvx2{&detail::dot_avx2, &detail::axpy_avx2, &detail::dot_rows_avx2, &detail::dot_rows2_avx2,
                               &detail::axpy2_avx2};
#endif
#if defined(TSTR_HAVE_NEON)
constexpr KernelTable kNeon{&detail::dot_neon, &detail::axpy_neon, &detail::dot_rows_neon, &detail::dot_rows2_neon,
                               &detail::axpy2_neon};
#endif

bool cpu_has_avx2() noexcept {
#if defined(TSTR_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* table_for(Isa isa) noexcept {
  switch (isa) {
    case Isa::avx2: return avx2_table();
    case Isa::neon: return neon_table();
    case Isa::scalar: break;
  }
  return &kScalar;
}

struct Dispatch {
  std::atomic<const KernelTable*> table;
  std::atomic<Isa> isa;
  Dispatch() : table(table_for(detected_isa())), isa(detected_isa()) {}
};

Dispatch& dispatch() noexcept {
  static Dispatch d;
  return d;
}

const KernelTable& current() noexcept {
  return *dispatch().table.load(std::memory_order_relaxed);
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
    case Isa::scalar: break;
  }
  return "scalar";
}

const KernelTable& scalar_table() noexcept { return kScalar; }

const KernelTable* avx2_table() noexcept {
#if defined(TSTR_HAVE_AVX2)
  if (cpu_has_avx2()) return &kAvx2;
#endif
  return nullptr;
}

const KernelTable* neon_table() noexcept {
#if defined(TSTR_HAVE_NEON)
  return &kNeon;
#else
  return nullptr;
#endif
}

Isa detected_isa() noexcept {
  if (avx2_table() != nullptr) return Isa::avx2;
  if (neon_table() != nullptr) return Isa::neon;
  return Isa::scalar;
}

Isa active_isa() noexcept { return dispatch().isa.load(std::memory_order_relaxed); }

Isa force_isa(Isa isa) noexcept {
  const KernelTable* t = table_for(isa);
  if (t == nullptr) {
    t = &kScalar;
    isa = Isa::scalar;
  }
  dispatch().table.store(t, std::memory_order_relaxed);
  dispatch().isa.store(isa, std::memory_order_relaxed);
  return isa;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  assert(a.size() == b.size());
  return current().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
  assert(x.size() == y.size());
  current().axpy(alpha, x.data(), y.data(), x.size());
}

void matvec(MatrixView w, std::span<const double> x, std::span<const double> bias,
            std::span<double> out) noexcept {
  assert(x.size() == w.cols && out.size() == w.rows);
  current().dot_rows(w.data, w.cols, x.data(), w.cols, w.rows, out.data());
  if (!bias.empty()) {
    for (std::size_t r = 0; r < w.rows; ++r) out[r] = out[r] + bias[r];
  }
}

void matvec_transposed(MatrixView w, std::span<const double> g, std::span<double> out) noexcept {
  assert(g.size() == w.rows && out.size() == w.cols);
  const KernelTable& k = current();
  for (double& o : out) o = 0.0;
  for (std::size_t r = 0; r < w.rows; ++r) {
    if (g[r] == 0.0) continue;
    k.axpy(g[r], w.data + r * w.cols, out.data(), w.cols);
  }
}

void add_outer(std::span<const double> g, std::span<const double> x, std::span<double> grad) noexcept {
  assert(grad.size() == g.size() * x.size());
  const KernelTable& k = current();
  for (std::size_t r = 0; r < g.size(); ++r) {
    if (g[r] == 0.0) continue;
    k.axpy(g[r], x.data(), grad.data() + r * x.size(), x.size());
  }
}

void matvec_pair(MatrixView w, std::span<const double> x1, std::span<const double> x2, std::span<const double> bias,
                 std::span<double> out1, std::span<double> out2) noexcept {
  assert(x1.size() == w.cols && x2.size() == w.cols && out1.size() == w.rows && out2.size() == w.rows);
  current().dot_rows2(w.data, w.cols, x1.data(), x2.data(), w.cols, w.rows, out1.data(), out2.data());
  if (!bias.empty()) {
    for (std::size_t r = 0; r < w.rows; ++r) {
      out1[r] = out1[r] + bias[r];
      out2[r] = out2[r] + bias[r];
    }
  }
}

void matvec_transposed_pair(MatrixView w, std::span<const double> g1, std::span<const double> g2,
                            std::span<double> out1, std::span<double> out2) noexcept {
  assert(g1.size() == w.rows && g2.size() == w.rows && out1.size() == w.cols && out2.size() == w.cols);
  const KernelTable& k = current();
  for (double& o : out1) o = 0.0;
  for (double& o : out2) o = 0.0;
  for (std::size_t r = 0; r < w.rows; ++r) {
    if (g1[r] != 0.0) k.axpy(g1[r], w.data + r * w.cols, out1.data(), w.cols);
    if (g2[r] != 0.0) k.axpy(g2[r], w.data + r * w.cols, out2.data(), w.cols);
  }
}

void add_outer_pair(std::span<const double> g1, std::span<const double> x1, std::span<const double> g2,
                    std::span<const double> x2, std::span<double> grad) noexcept {
  assert(g1.size() == g2.size() && x1.size() == x2.size() && grad.size() == g1.size() * x1.size());
  const KernelTable& k = current();
  const std::size_t n = x1.size();
  for (std::size_t r = 0; r < g1.size(); ++r) {
    double* y = grad.data() + r * n;
    // Zero coefficients are skipped, as in add_outer, so signed zeros match.
    if (g1[r] != 0.0 && g2[r] != 0.0) {
      k.axpy2(g1[r], x1.data(), g2[r], x2.data(), y, n);
    } else if (g1[r] != 0.0) {
      k.axpy(g1[r], x1.data(), y, n);
    } else if (g2[r] != 0.0) {
      k.axpy(g2[r], x2.data(), y, n);
    }
  }
}

}  // namespace tstr::kernels
