#include "spt/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace spt::kern {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// One output row of c = a·b, inner loop ordered k-then-j for locality.
inline void gemm_nn_row(int i, int p, int q, const double* a, const double* b,
                        double* c, bool accumulate) {
  double* ci = c + static_cast<int64_t>(i) * q;
  if (!accumulate) std::fill(ci, ci + q, 0.0);
  const double* ai = a + static_cast<int64_t>(i) * p;
  for (int k = 0; k < p; ++k) {
    const double aik = ai[k];
    const double* bk = b + static_cast<int64_t>(k) * q;
    for (int j = 0; j < q; ++j) ci[j] += aik * bk[j];
  }
}

inline void gemm_nt_row(int i, int p, int q, const double* a, const double* b,
                        double* c, bool accumulate) {
  double* ci = c + static_cast<int64_t>(i) * q;
  const double* ai = a + static_cast<int64_t>(i) * p;
  for (int j = 0; j < q; ++j) {
    const double* bj = b + static_cast<int64_t>(j) * p;
    double acc = 0.0;
    for (int k = 0; k < p; ++k) acc += ai[k] * bj[k];
    ci[j] = accumulate ? ci[j] + acc : acc;
  }
}

inline void softmax_row(int i, int rows, int cols, const double* x, double* y,
                        bool causal) {
  const double* xi = x + static_cast<int64_t>(i) * cols;
  double* yi = y + static_cast<int64_t>(i) * cols;
  const int limit = causal ? std::min(cols, i + (cols - rows) + 1) : cols;
  double mx = xi[0];
  for (int j = 1; j < limit; ++j) mx = std::max(mx, xi[j]);
  double sum = 0.0;
  for (int j = 0; j < limit; ++j) {
    yi[j] = std::exp(xi[j] - mx);
    sum += yi[j];
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < limit; ++j) yi[j] *= inv;
  for (int j = limit; j < cols; ++j) yi[j] = 0.0;
}

inline void layernorm_row(int i, int d, const double* x, const double* gain,
                          const double* bias, double eps, double* y,
                          double* mean, double* rstd) {
  const double* xi = x + static_cast<int64_t>(i) * d;
  double* yi = y + static_cast<int64_t>(i) * d;
  double mu = 0.0;
  for (int j = 0; j < d; ++j) mu += xi[j];
  mu /= d;
  double var = 0.0;
  for (int j = 0; j < d; ++j) {
    const double c = xi[j] - mu;
    var += c * c;
  }
  var /= d;
  const double r = 1.0 / std::sqrt(var + eps);
  for (int j = 0; j < d; ++j) yi[j] = (xi[j] - mu) * r * gain[j] + bias[j];
  mean[i] = mu;
  rstd[i] = r;
}

inline void nll_row(int i, int cols, const double* x, const int* targets,
                    double* loss, double* probs) {
  const double* xi = x + static_cast<int64_t>(i) * cols;
  double mx = xi[0];
  for (int j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
  double sum = 0.0;
  for (int j = 0; j < cols; ++j) sum += std::exp(xi[j] - mx);
  const double lse = mx + std::log(sum);
  loss[i] = lse - xi[targets[i]];
  if (probs) {
    double* pi = probs + static_cast<int64_t>(i) * cols;
    for (int j = 0; j < cols; ++j) pi[j] = std::exp(xi[j] - lse);
  }
}

}  // namespace

double gelu_value(double x) {
  return x * 0.5 * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_slope(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

namespace ref {

void gemm_nn(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i) gemm_nn_row(i, p, q, a, b, c, accumulate);
}

void gemm_nt(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i) gemm_nt_row(i, p, q, a, b, c, accumulate);
}

void gemm_tn(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<int64_t>(i) * q;
    for (int j = 0; j < q; ++j) {
      double acc = 0.0;
      for (int k = 0; k < p; ++k)
        acc += a[static_cast<int64_t>(k) * m + i] *
               b[static_cast<int64_t>(k) * q + j];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

void gelu(const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = gelu_value(x[i]);
}

void gelu_grad(const double* x, const double* gy, double* gx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) gx[i] += gy[i] * gelu_slope(x[i]);
}

void softmax_rows(int rows, int cols, const double* x, double* y,
                  bool causal) {
  for (int i = 0; i < rows; ++i) softmax_row(i, rows, cols, x, y, causal);
}

void layernorm_rows(int rows, int d, const double* x, const double* gain,
                    const double* bias, double eps, double* y, double* mean,
                    double* rstd) {
  for (int i = 0; i < rows; ++i)
    layernorm_row(i, d, x, gain, bias, eps, y, mean, rstd);
}

void nll_rows(int rows, int cols, const double* x, const int* targets,
              double* loss, double* probs) {
  for (int i = 0; i < rows; ++i) nll_row(i, cols, x, targets, loss, probs);
}

}  // namespace ref

void gemm_nn(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate) {
  const int64_t work = static_cast<int64_t>(m) * p * q;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff && m > 1)
  for (int i = 0; i < m; ++i) gemm_nn_row(i, p, q, a, b, c, accumulate);
}

void gemm_nt(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate) {
  const int64_t work = static_cast<int64_t>(m) * p * q;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff && m > 1)
  for (int i = 0; i < m; ++i) gemm_nt_row(i, p, q, a, b, c, accumulate);
}

void gemm_tn(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate) {
  const int64_t work = static_cast<int64_t>(m) * p * q;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff && m > 1)
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<int64_t>(i) * q;
    for (int j = 0; j < q; ++j) {
      double acc = 0.0;
      for (int k = 0; k < p; ++k)
        acc += a[static_cast<int64_t>(k) * m + i] *
               b[static_cast<int64_t>(k) * q + j];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  }
}

void gelu(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (int64_t i = 0; i < n; ++i) y[i] = gelu_value(x[i]);
}

void gelu_grad(const double* x, const double* gy, double* gx, int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
  for (int64_t i = 0; i < n; ++i) gx[i] += gy[i] * gelu_slope(x[i]);
}

void softmax_rows(int rows, int cols, const double* x, double* y,
                  bool causal) {
  const int64_t work = static_cast<int64_t>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff && rows > 1)
  for (int i = 0; i < rows; ++i) softmax_row(i, rows, cols, x, y, causal);
}

void layernorm_rows(int rows, int d, const double* x, const double* gain,
                    const double* bias, double eps, double* y, double* mean,
                    double* rstd) {
  const int64_t work = static_cast<int64_t>(rows) * d;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff && rows > 1)
  for (int i = 0; i < rows; ++i)
    layernorm_row(i, d, x, gain, bias, eps, y, mean, rstd);
}

void nll_rows(int rows, int cols, const double* x, const int* targets,
              double* loss, double* probs) {
  const int64_t work = static_cast<int64_t>(rows) * cols;
#pragma omp parallel for schedule(static) if (work >= kParallelCutoff && rows > 1)
  for (int i = 0; i < rows; ++i) nll_row(i, cols, x, targets, loss, probs);
}

}  // namespace spt::kern
