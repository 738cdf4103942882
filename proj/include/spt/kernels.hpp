#pragma once

#include <cstdint>

namespace spt::kern {

// Work-item threshold below which the OpenMP kernels fall back to the serial
// loop. Both paths compute each output element with a single writer and a
// fixed reduction order, so results are bit-identical for any thread count.
inline constexpr int64_t kParallelCutoff = 1 << 15;

// Serial reference implementations. These are the oracle the OpenMP kernels
// are tested against and the baseline the benchmark tool compares with.
namespace ref {

// c = a(m×p) · b(p×q), accumulating into c when accumulate is set.
void gemm_nn(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate);
// c = a(m×p) · b(q×p)ᵀ
void gemm_nt(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate);
// c = a(p×m)ᵀ · b(p×q)
void gemm_tn(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate);

// Exact erf-based GeLU: y = x · Φ(x).
void gelu(const double* x, double* y, int64_t n);
// gx += gy · (Φ(x) + x·φ(x))
void gelu_grad(const double* x, const double* gy, double* gx, int64_t n);

// Row softmax over x(rows×cols). When causal, row i admits columns
// j <= i + (cols - rows); excluded columns get probability zero.
void softmax_rows(int rows, int cols, const double* x, double* y, bool causal);

// Per-row layer norm with affine transform; saves mean and 1/sqrt(var+eps)
// per row for the backward pass.
void layernorm_rows(int rows, int d, const double* x, const double* gain,
                    const double* bias, double eps, double* y, double* mean,
                    double* rstd);

// Per-row −log softmax(x)[target]; probs (rows×cols, optional) receives the
// full softmax for the backward pass.
void nll_rows(int rows, int cols, const double* x, const int* targets,
              double* loss, double* probs);

}  // namespace ref

// OpenMP-parallel kernels; identical signatures and bit-identical output.
void gemm_nn(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(int m, int p, int q, const double* a, const double* b, double* c,
             bool accumulate);
void gelu(const double* x, double* y, int64_t n);
void gelu_grad(const double* x, const double* gy, double* gx, int64_t n);
void softmax_rows(int rows, int cols, const double* x, double* y, bool causal);
void layernorm_rows(int rows, int d, const double* x, const double* gain,
                    const double* bias, double eps, double* y, double* mean,
                    double* rstd);
void nll_rows(int rows, int cols, const double* x, const int* targets,
              double* loss, double* probs);

double gelu_value(double x);
double gelu_slope(double x);

}  // namespace spt::kern
