// Compares the OpenMP kernels against the serial reference: wall time,
// speedup, and a max-abs-difference column that must read 0 (both paths
// compute each output element with a single writer and a fixed reduction
// order).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "spt/kernels.hpp"
#include "spt/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int iters) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < iters; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

void bench_gemm(int n, int iters) {
  spt::Rng rng(7);
  std::vector<double> a(static_cast<size_t>(n) * n), b(a), c_ref(a), c_omp(a);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();

  const double serial = time_ms(
      [&] { spt::kern::ref::gemm_nn(n, n, n, a.data(), b.data(), c_ref.data(), false); },
      iters);
  const double parallel = time_ms(
      [&] { spt::kern::gemm_nn(n, n, n, a.data(), b.data(), c_omp.data(), false); },
      iters);
  const double flops = 2.0 * n * n * n;
  std::printf("gemm_nn  %4dx%-4d  serial %8.2f ms (%5.2f GF/s)  omp %8.2f ms "
              "(%5.2f GF/s)  speedup %.2fx  maxdiff %g\n",
              n, n, serial, flops / serial / 1e6, parallel,
              flops / parallel / 1e6, serial / parallel,
              max_abs_diff(c_ref, c_omp));
}

void bench_gelu(int64_t n, int iters) {
  spt::Rng rng(11);
  std::vector<double> x(static_cast<size_t>(n)), y_ref(x), y_omp(x);
  for (auto& v : x) v = rng.normal();
  const double serial =
      time_ms([&] { spt::kern::ref::gelu(x.data(), y_ref.data(), n); }, iters);
  const double parallel =
      time_ms([&] { spt::kern::gelu(x.data(), y_omp.data(), n); }, iters);
  std::printf("gelu     n=%-8lld serial %8.2f ms  omp %8.2f ms  speedup %.2fx  "
              "maxdiff %g\n",
              static_cast<long long>(n), serial, parallel, serial / parallel,
              max_abs_diff(y_ref, y_omp));
}

void bench_softmax(int rows, int cols, int iters) {
  spt::Rng rng(13);
  std::vector<double> x(static_cast<size_t>(rows) * cols), y_ref(x), y_omp(x);
  for (auto& v : x) v = rng.normal();
  const double serial = time_ms(
      [&] { spt::kern::ref::softmax_rows(rows, cols, x.data(), y_ref.data(), false); },
      iters);
  const double parallel = time_ms(
      [&] { spt::kern::softmax_rows(rows, cols, x.data(), y_omp.data(), false); },
      iters);
  std::printf("softmax  %4dx%-4d  serial %8.2f ms  omp %8.2f ms  speedup %.2fx  "
              "maxdiff %g\n",
              rows, cols, serial, parallel, serial / parallel,
              max_abs_diff(y_ref, y_omp));
}

void bench_layernorm(int rows, int d, int iters) {
  spt::Rng rng(17);
  std::vector<double> x(static_cast<size_t>(rows) * d), y_ref(x), y_omp(x);
  std::vector<double> gain(static_cast<size_t>(d), 1.0), bias(static_cast<size_t>(d), 0.0);
  std::vector<double> mean(static_cast<size_t>(rows)), rstd(mean);
  for (auto& v : x) v = rng.normal();
  const double serial = time_ms(
      [&] {
        spt::kern::ref::layernorm_rows(rows, d, x.data(), gain.data(),
                                       bias.data(), 1e-6, y_ref.data(),
                                       mean.data(), rstd.data());
      },
      iters);
  const double parallel = time_ms(
      [&] {
        spt::kern::layernorm_rows(rows, d, x.data(), gain.data(), bias.data(),
                                  1e-6, y_omp.data(), mean.data(), rstd.data());
      },
      iters);
  std::printf("layernorm %4dx%-3d  serial %8.2f ms  omp %8.2f ms  speedup %.2fx  "
              "maxdiff %g\n",
              rows, d, serial, parallel, serial / parallel,
              max_abs_diff(y_ref, y_omp));
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP\n");
#endif
  for (int n : {64, 128, 256, 384}) bench_gemm(n, n <= 128 ? 50 : 10);
  bench_gelu(1 << 16, 50);
  bench_gelu(1 << 20, 10);
  bench_softmax(2048, 512, 20);
  bench_layernorm(4096, 64, 50);
  return 0;
}
