#pragma once

#include <vector>

#include "spt/tensor.hpp"

namespace spt::ops {

// All operations record their backward rule on the tape when it is recording
// and some input requires grad. Inputs are 2-D unless noted.

// a(m×p) · b(p×q) -> (m×q)
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// Same-shape elementwise sum.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
// x(m×d) + bias(d) broadcast over rows.
Tensor add_rowwise(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor scale(Tape& tape, const Tensor& x, double s);
// Same-shape elementwise product.
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// Sum of all elements -> scalar.
Tensor sum(Tape& tape, const Tensor& x);
// Mean of scalar tensors -> scalar.
Tensor mean_stack(Tape& tape, const std::vector<Tensor>& scalars);

// Exact Gaussian-error GeLU, any shape.
Tensor gelu(Tape& tape, const Tensor& x);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
Tensor transpose(Tape& tape, const Tensor& x);
// Concatenate along the sequence (row) axis.
Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b);
Tensor slice_cols(Tape& tape, const Tensor& x, int offset, int len);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);

// table(V×d) gathered at ids -> (|ids|×d); backward scatter-adds into table.
Tensor embedding_lookup(Tape& tape, const Tensor& table,
                        const std::vector<int>& ids);

// Row softmax; causal restricts row i to columns j <= i + (cols - rows).
Tensor softmax_rows(Tape& tape, const Tensor& x, bool causal = false);

// Per-row normalization over the last axis, then affine transform.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps = 1e-6);

// Mean over rows of −log softmax(logits)[target] -> scalar.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits,
                             const std::vector<int>& targets);

}  // namespace spt::ops
