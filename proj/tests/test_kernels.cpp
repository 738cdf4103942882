#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "spt/kernels.hpp"
#include "spt/rng.hpp"

using namespace spt;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// Plain triple loop, the most naive possible oracle for both gemm paths.
void naive_gemm(int m, int p, int q, const std::vector<double>& a,
                const std::vector<double>& b, std::vector<double>& c) {
  c.assign(static_cast<size_t>(m) * q, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < q; ++j)
      for (int k = 0; k < p; ++k)
        c[static_cast<size_t>(i) * q + j] +=
            a[static_cast<size_t>(i) * p + k] * b[static_cast<size_t>(k) * q + j];
}

}  // namespace

TEST_CASE("gemm_nn matches a naive triple loop") {
  Rng rng(1);
  for (auto [m, p, q] : {std::tuple{1, 1, 1}, {3, 4, 2}, {7, 5, 9}}) {
    auto a = random_vec(static_cast<size_t>(m) * p, rng);
    auto b = random_vec(static_cast<size_t>(p) * q, rng);
    std::vector<double> expect, got(static_cast<size_t>(m) * q, 0.0);
    naive_gemm(m, p, q, a, b, expect);
    kern::ref::gemm_nn(m, p, q, a.data(), b.data(), got.data(), false);
    for (size_t i = 0; i < expect.size(); ++i)
      CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("gemm_nt and gemm_tn agree with explicit transposition") {
  Rng rng(2);
  const int m = 6, p = 5, q = 4;
  auto a = random_vec(static_cast<size_t>(m) * p, rng);   // m×p
  auto bt = random_vec(static_cast<size_t>(q) * p, rng);  // q×p
  // b = btᵀ is p×q
  std::vector<double> b(static_cast<size_t>(p) * q);
  for (int i = 0; i < q; ++i)
    for (int k = 0; k < p; ++k)
      b[static_cast<size_t>(k) * q + i] = bt[static_cast<size_t>(i) * p + k];
  std::vector<double> expect;
  naive_gemm(m, p, q, a, b, expect);
  std::vector<double> got(static_cast<size_t>(m) * q, 0.0);
  kern::ref::gemm_nt(m, p, q, a.data(), bt.data(), got.data(), false);
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));

  // c = atᵀ·b where at is p×m
  auto at = random_vec(static_cast<size_t>(p) * m, rng);
  std::vector<double> a2(static_cast<size_t>(m) * p);
  for (int k = 0; k < p; ++k)
    for (int i = 0; i < m; ++i)
      a2[static_cast<size_t>(i) * p + k] = at[static_cast<size_t>(k) * m + i];
  naive_gemm(m, p, q, a2, b, expect);
  std::vector<double> got2(static_cast<size_t>(m) * q, 0.0);
  kern::ref::gemm_tn(m, p, q, at.data(), b.data(), got2.data(), false);
  for (size_t i = 0; i < expect.size(); ++i)
    CHECK(got2[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("accumulate adds on top of existing output") {
  Rng rng(3);
  const int m = 3, p = 4, q = 5;
  auto a = random_vec(static_cast<size_t>(m) * p, rng);
  auto b = random_vec(static_cast<size_t>(p) * q, rng);
  std::vector<double> base = random_vec(static_cast<size_t>(m) * q, rng);
  std::vector<double> once, acc = base;
  naive_gemm(m, p, q, a, b, once);
  kern::ref::gemm_nn(m, p, q, a.data(), b.data(), acc.data(), true);
  for (size_t i = 0; i < acc.size(); ++i)
    CHECK(acc[i] == doctest::Approx(base[i] + once[i]).epsilon(1e-12));
}

TEST_CASE("OpenMP kernels are bit-identical to the serial reference") {
  Rng rng(4);
  // Sizes straddle the parallel cutoff so both code paths execute.
  for (auto [m, p, q] : {std::tuple{5, 7, 3}, {40, 40, 40}, {64, 96, 64}}) {
    auto a = random_vec(static_cast<size_t>(m) * p, rng);
    auto b = random_vec(static_cast<size_t>(p) * q, rng);
    auto bt = random_vec(static_cast<size_t>(q) * p, rng);
    auto at = random_vec(static_cast<size_t>(p) * m, rng);
    std::vector<double> r1(static_cast<size_t>(m) * q), r2 = r1;
    kern::ref::gemm_nn(m, p, q, a.data(), b.data(), r1.data(), false);
    kern::gemm_nn(m, p, q, a.data(), b.data(), r2.data(), false);
    CHECK(r1 == r2);
    kern::ref::gemm_nt(m, p, q, a.data(), bt.data(), r1.data(), false);
    kern::gemm_nt(m, p, q, a.data(), bt.data(), r2.data(), false);
    CHECK(r1 == r2);
    kern::ref::gemm_tn(m, p, q, at.data(), b.data(), r1.data(), false);
    kern::gemm_tn(m, p, q, at.data(), b.data(), r2.data(), false);
    CHECK(r1 == r2);
  }

  const int64_t n = kern::kParallelCutoff * 2;
  auto x = random_vec(static_cast<size_t>(n), rng);
  std::vector<double> y1(static_cast<size_t>(n)), y2 = y1;
  kern::ref::gelu(x.data(), y1.data(), n);
  kern::gelu(x.data(), y2.data(), n);
  CHECK(y1 == y2);

  const int rows = 300, cols = 128;
  auto s = random_vec(static_cast<size_t>(rows) * cols, rng);
  std::vector<double> sm1(s.size()), sm2(s.size());
  kern::ref::softmax_rows(rows, cols, s.data(), sm1.data(), false);
  kern::softmax_rows(rows, cols, s.data(), sm2.data(), false);
  CHECK(sm1 == sm2);
  auto sq = random_vec(static_cast<size_t>(cols) * cols, rng);
  std::vector<double> sq1(sq.size()), sq2(sq.size());
  kern::ref::softmax_rows(cols, cols, sq.data(), sq1.data(), true);
  kern::softmax_rows(cols, cols, sq.data(), sq2.data(), true);
  CHECK(sq1 == sq2);

  auto gain = random_vec(static_cast<size_t>(cols), rng);
  auto bias = random_vec(static_cast<size_t>(cols), rng);
  std::vector<double> ln1(s.size()), ln2(s.size());
  std::vector<double> mean1(rows), rstd1(rows), mean2(rows), rstd2(rows);
  kern::ref::layernorm_rows(rows, cols, s.data(), gain.data(), bias.data(),
                            1e-6, ln1.data(), mean1.data(), rstd1.data());
  kern::layernorm_rows(rows, cols, s.data(), gain.data(), bias.data(), 1e-6,
                       ln2.data(), mean2.data(), rstd2.data());
  CHECK(ln1 == ln2);
  CHECK(mean1 == mean2);
  CHECK(rstd1 == rstd2);

  std::vector<int> targets(rows);
  for (int i = 0; i < rows; ++i)
    targets[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(cols));
  std::vector<double> l1(rows), l2(rows), p1(s.size()), p2(s.size());
  kern::ref::nll_rows(rows, cols, s.data(), targets.data(), l1.data(), p1.data());
  kern::nll_rows(rows, cols, s.data(), targets.data(), l2.data(), p2.data());
  CHECK(l1 == l2);
  CHECK(p1 == p2);
}

TEST_CASE("causal softmax zeroes the excluded columns") {
  std::vector<double> x(16, 0.0);
  std::vector<double> y(16, -1.0);
  kern::ref::softmax_rows(4, 4, x.data(), y.data(), true);
  for (int i = 0; i < 4; ++i) {
    double row_sum = 0;
    for (int j = 0; j < 4; ++j) {
      if (j > i) CHECK(y[static_cast<size_t>(i) * 4 + j] == 0.0);
      row_sum += y[static_cast<size_t>(i) * 4 + j];
    }
    CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
    // uniform over the allowed prefix
    CHECK(y[static_cast<size_t>(i) * 4] ==
          doctest::Approx(1.0 / (i + 1)).epsilon(1e-12));
  }
}

TEST_CASE("gelu values and slope") {
  CHECK(kern::gelu_value(0.0) == 0.0);
  CHECK(std::fabs(kern::gelu_value(-10.0)) < 1e-6);
  CHECK(kern::gelu_value(10.0) == doctest::Approx(10.0).epsilon(1e-9));
  // slope at 0 is Φ(0) = 0.5
  CHECK(kern::gelu_slope(0.0) == doctest::Approx(0.5).epsilon(1e-12));
}
