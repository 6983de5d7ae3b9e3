#include <doctest.h>

#include <bit>
#include <cstring>
#include <vector>

#include "tstr/kernels.hpp"
#include "tstr/rng.hpp"

using namespace tstr;
using namespace tstr::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-10.0, 10.0);
  return v;
}

bool bitwise_equal(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

const KernelTable* vector_table() {
  if (const KernelTable* t = avx2_table()) return t;
  return neon_table();
}

struct IsaGuard {
  ~IsaGuard() { force_isa(detected_isa()); }
};

}  // namespace

TEST_CASE("scalar dot follows the canonical lane order") {
  Rng rng(1);
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 16u, 31u, 64u, 100u}) {
    const auto a = random_vec(rng, n), b = random_vec(rng, n);
    double lanes[8] = {};
    const std::size_t blocks = n / 8 * 8;
    for (std::size_t i = 0; i < blocks; ++i) lanes[i % 8] += a[i] * b[i];
    double s[4];
    for (int j = 0; j < 4; ++j) s[j] = lanes[j] + lanes[j + 4];
    double expect = (s[0] + s[1]) + (s[2] + s[3]);
    for (std::size_t i = blocks; i < n; ++i) expect += a[i] * b[i];
    CHECK(bitwise_equal(scalar_table().dot(a.data(), b.data(), n), expect));
  }
}

TEST_CASE("vector kernels agree bitwise with the scalar reference") {
  const KernelTable* vt = vector_table();
  if (vt == nullptr) {
    MESSAGE("no vector ISA available; skipping");
    return;
  }
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = rng.below(130);
    const auto a = random_vec(rng, n), b = random_vec(rng, n);
    REQUIRE(bitwise_equal(scalar_table().dot(a.data(), b.data(), n), vt->dot(a.data(), b.data(), n)));
    auto y1 = b, y2 = b;
    const double alpha = rng.uniform(-2, 2);
    scalar_table().axpy(alpha, a.data(), y1.data(), n);
    vt->axpy(alpha, a.data(), y2.data(), n);
    REQUIRE(std::memcmp(y1.data(), y2.data(), n * sizeof(double)) == 0);
    const std::size_t rows = rng.below(11);
    const auto w = random_vec(rng, rows * n);
    std::vector<double> r1(rows), r2(rows);
    scalar_table().dot_rows(w.data(), n, a.data(), n, rows, r1.data());
    vt->dot_rows(w.data(), n, a.data(), n, rows, r2.data());
    REQUIRE(std::memcmp(r1.data(), r2.data(), rows * sizeof(double)) == 0);
    for (std::size_t r = 0; r < rows; ++r) REQUIRE(bitwise_equal(r1[r], scalar_table().dot(w.data() + r * n, a.data(), n)));
    std::vector<double> p1(rows), p2(rows), q1(rows), q2(rows);
    scalar_table().dot_rows2(w.data(), n, a.data(), b.data(), n, rows, p1.data(), p2.data());
    vt->dot_rows2(w.data(), n, a.data(), b.data(), n, rows, q1.data(), q2.data());
    REQUIRE(std::memcmp(p1.data(), r1.data(), rows * sizeof(double)) == 0);
    REQUIRE(std::memcmp(p1.data(), q1.data(), rows * sizeof(double)) == 0);
    REQUIRE(std::memcmp(p2.data(), q2.data(), rows * sizeof(double)) == 0);
    auto z1 = w, z2 = w;
    z1.resize(n);
    z2.resize(n);
    scalar_table().axpy2(alpha, a.data(), -alpha, b.data(), z1.data(), n);
    vt->axpy2(alpha, a.data(), -alpha, b.data(), z2.data(), n);
    REQUIRE(std::memcmp(z1.data(), z2.data(), n * sizeof(double)) == 0);
  }
}

TEST_CASE("dispatched matrix kernels are ISA independent") {
  IsaGuard guard;
  Rng rng(3);
  const std::size_t rows = 13, cols = 37;
  const auto w = random_vec(rng, rows * cols), x = random_vec(rng, cols), bias = random_vec(rng, rows);
  auto g = random_vec(rng, rows);
  g[4] = 0.0;
  auto run = [&](Isa isa) {
    force_isa(isa);
    std::vector<double> out(rows), back(cols, 0.0), grad(rows * cols, 1.0);
    matvec({w.data(), rows, cols}, x, bias, out);
    matvec_transposed({w.data(), rows, cols}, g, back);
    add_outer(g, x, grad);
    out.insert(out.end(), back.begin(), back.end());
    out.insert(out.end(), grad.begin(), grad.end());
    return out;
  };
  const auto ref = run(Isa::scalar);
  const auto vec = run(detected_isa());
  REQUIRE(ref.size() == vec.size());
  CHECK(std::memcmp(ref.data(), vec.data(), ref.size() * sizeof(double)) == 0);
}

TEST_CASE("pair kernels equal two single calls") {
  IsaGuard guard;
  Rng rng(5);
  const std::size_t rows = 11, cols = 29;
  const auto w = random_vec(rng, rows * cols), bias = random_vec(rng, rows);
  const auto x1 = random_vec(rng, cols), x2 = random_vec(rng, cols);
  auto g1 = random_vec(rng, rows), g2 = random_vec(rng, rows);
  g1[2] = 0.0;
  g2[5] = 0.0;
  g1[7] = g2[7] = 0.0;
  for (Isa isa : {Isa::scalar, detected_isa()}) {
    force_isa(isa);
    const MatrixView m{w.data(), rows, cols};
    std::vector<double> s1(rows), s2(rows), p1(rows), p2(rows);
    matvec(m, x1, bias, s1);
    matvec(m, x2, bias, s2);
    matvec_pair(m, x1, x2, bias, p1, p2);
    CHECK(std::memcmp(s1.data(), p1.data(), rows * sizeof(double)) == 0);
    CHECK(std::memcmp(s2.data(), p2.data(), rows * sizeof(double)) == 0);

    std::vector<double> t1(cols), t2(cols), u1(cols), u2(cols);
    matvec_transposed(m, g1, t1);
    matvec_transposed(m, g2, t2);
    matvec_transposed_pair(m, g1, g2, u1, u2);
    CHECK(std::memcmp(t1.data(), u1.data(), cols * sizeof(double)) == 0);
    CHECK(std::memcmp(t2.data(), u2.data(), cols * sizeof(double)) == 0);

    // -0.0 entries catch a fused update that adds zero products
    std::vector<double> seq(rows * cols, -0.0), fused(rows * cols, -0.0);
    add_outer(g1, x1, seq);
    add_outer(g2, x2, seq);
    add_outer_pair(g1, x1, g2, x2, fused);
    CHECK(std::memcmp(seq.data(), fused.data(), seq.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("matvec matches a naive product") {
  IsaGuard guard;
  force_isa(Isa::scalar);
  Rng rng(4);
  const std::size_t rows = 5, cols = 11;
  const auto w = random_vec(rng, rows * cols), x = random_vec(rng, cols);
  std::vector<double> out(rows);
  matvec({w.data(), rows, cols}, x, {}, out);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += w[r * cols + c] * x[c];
    CHECK(out[r] == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("force_isa falls back to scalar when unavailable") {
  IsaGuard guard;
  const Isa missing = detected_isa() == Isa::neon ? Isa::avx2 : Isa::neon;
  CHECK(force_isa(missing) == Isa::scalar);
  CHECK(active_isa() == Isa::scalar);
  CHECK(isa_name(Isa::avx2) == "avx2");
}
