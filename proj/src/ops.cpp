#include "spt/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "spt/kernels.hpp"

namespace spt::ops {

namespace {

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    throw std::invalid_argument(std::string(op) + ": expected a 2-D tensor, got " +
                                shape_str(t.shape()));
}

bool flows(const Tensor& t) { return t.requires_grad(); }

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const int m = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor out = Tensor::zeros({m, q}, flows(a) || flows(b));
  kern::gemm_nn(m, p, q, a.data(), b.data(), out.data(), false);
  if (tape.recording() && out.requires_grad()) {
    Tensor ac = a, bc = b;
    tape.record([ac, bc, out, m, p, q]() mutable {
      if (!out.has_grad()) return;
      if (ac.requires_grad()) {
        ac.ensure_grad();
        kern::gemm_nt(m, q, p, out.grad(), bc.data(), ac.grad(), true);
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();
        kern::gemm_tn(p, m, q, ac.data(), out.grad(), bc.grad(), true);
      }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape(), flows(a) || flows(b));
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (tape.recording() && out.requires_grad()) {
    Tensor ac = a, bc = b;
    tape.record([ac, bc, out, n]() mutable {
      if (!out.has_grad()) return;
      if (ac.requires_grad()) {
        ac.ensure_grad();
        for (int64_t i = 0; i < n; ++i) ac.grad()[i] += out.grad()[i];
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();
        for (int64_t i = 0; i < n; ++i) bc.grad()[i] += out.grad()[i];
      }
    });
  }
  return out;
}

Tensor add_rowwise(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_2d(x, "add_rowwise");
  if (bias.ndim() != 1 || bias.dim(0) != x.dim(1))
    throw std::invalid_argument("add_rowwise: bias " + shape_str(bias.shape()) +
                                " does not match rows of " +
                                shape_str(x.shape()));
  const int m = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros({m, d}, flows(x) || flows(bias));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < d; ++j)
      out.data()[static_cast<int64_t>(i) * d + j] =
          x.data()[static_cast<int64_t>(i) * d + j] + bias.data()[j];
  if (tape.recording() && out.requires_grad()) {
    Tensor xc = x, bias_c = bias;
    tape.record([xc, bias_c, out, m, d]() mutable {
      if (!out.has_grad()) return;
      if (xc.requires_grad()) {
        xc.ensure_grad();
        const int64_t n = static_cast<int64_t>(m) * d;
        for (int64_t i = 0; i < n; ++i) xc.grad()[i] += out.grad()[i];
      }
      if (bias_c.requires_grad()) {
        bias_c.ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < d; ++j)
            bias_c.grad()[j] += out.grad()[static_cast<int64_t>(i) * d + j];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double s) {
  Tensor out = Tensor::zeros(x.shape(), flows(x));
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * s;
  if (tape.recording() && out.requires_grad()) {
    Tensor xc = x;
    tape.record([xc, out, s, n]() mutable {
      if (!out.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      for (int64_t i = 0; i < n; ++i) xc.grad()[i] += out.grad()[i] * s;
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  Tensor out = Tensor::zeros(a.shape(), flows(a) || flows(b));
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (tape.recording() && out.requires_grad()) {
    Tensor ac = a, bc = b;
    tape.record([ac, bc, out, n]() mutable {
      if (!out.has_grad()) return;
      if (ac.requires_grad()) {
        ac.ensure_grad();
        for (int64_t i = 0; i < n; ++i)
          ac.grad()[i] += out.grad()[i] * bc.data()[i];
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();
        for (int64_t i = 0; i < n; ++i)
          bc.grad()[i] += out.grad()[i] * ac.data()[i];
      }
    });
  }
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  Tensor out = Tensor::zeros({1}, flows(x));
  double acc = 0.0;
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) acc += x.data()[i];
  out.data()[0] = acc;
  if (tape.recording() && out.requires_grad()) {
    Tensor xc = x;
    tape.record([xc, out, n]() mutable {
      if (!out.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      const double g = out.grad()[0];
      for (int64_t i = 0; i < n; ++i) xc.grad()[i] += g;
    });
  }
  return out;
}

Tensor mean_stack(Tape& tape, const std::vector<Tensor>& scalars) {
  if (scalars.empty())
    throw std::invalid_argument("mean_stack: empty input");
  bool rg = false;
  double acc = 0.0;
  for (const auto& s : scalars) {
    acc += s.item();
    rg = rg || s.requires_grad();
  }
  const double inv = 1.0 / static_cast<double>(scalars.size());
  Tensor out = Tensor::scalar(acc * inv, rg);
  if (tape.recording() && out.requires_grad()) {
    std::vector<Tensor> sc(scalars.begin(), scalars.end());
    tape.record([sc, out, inv]() mutable {
      if (!out.has_grad()) return;
      for (auto& s : sc) {
        if (!s.requires_grad()) continue;
        s.ensure_grad();
        s.grad()[0] += out.grad()[0] * inv;
      }
    });
  }
  return out;
}

Tensor gelu(Tape& tape, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), flows(x));
  kern::gelu(x.data(), out.data(), x.numel());
  if (tape.recording() && out.requires_grad()) {
    Tensor xc = x;
    tape.record([xc, out]() mutable {
      if (!out.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      kern::gelu_grad(xc.data(), out.grad(), xc.grad(), xc.numel());
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: cannot view " +
                                shape_str(x.shape()) + " as " +
                                shape_str(shape));
  Tensor out = Tensor::from_data(shape, x.vec(), flows(x));
  if (tape.recording() && out.requires_grad()) {
    Tensor xc = x;
    tape.record([xc, out]() mutable {
      if (!out.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      const int64_t n = xc.numel();
      for (int64_t i = 0; i < n; ++i) xc.grad()[i] += out.grad()[i];
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& x) {
  require_2d(x, "transpose");
  const int m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({n, m}, flows(x));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.data()[static_cast<int64_t>(j) * m + i] =
          x.data()[static_cast<int64_t>(i) * n + j];
  if (tape.recording() && out.requires_grad()) {
    Tensor xc = x;
    tape.record([xc, out, m, n]() mutable {
      if (!out.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          xc.grad()[static_cast<int64_t>(i) * n + j] +=
              out.grad()[static_cast<int64_t>(j) * m + i];
    });
  }
  return out;
}

Tensor concat_rows(Tape& tape, const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_rows");
  require_2d(b, "concat_rows");
  if (a.dim(1) != b.dim(1))
    throw std::invalid_argument("concat_rows: column mismatch: " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const int ma = a.dim(0), mb = b.dim(0), d = a.dim(1);
  Tensor out = Tensor::zeros({ma + mb, d}, flows(a) || flows(b));
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  if (tape.recording() && out.requires_grad()) {
    Tensor ac = a, bc = b;
    tape.record([ac, bc, out, ma, mb, d]() mutable {
      if (!out.has_grad()) return;
      if (ac.requires_grad()) {
        ac.ensure_grad();
        const int64_t n = static_cast<int64_t>(ma) * d;
        for (int64_t i = 0; i < n; ++i) ac.grad()[i] += out.grad()[i];
      }
      if (bc.requires_grad()) {
        bc.ensure_grad();
        const int64_t off = static_cast<int64_t>(ma) * d;
        const int64_t n = static_cast<int64_t>(mb) * d;
        for (int64_t i = 0; i < n; ++i) bc.grad()[i] += out.grad()[off + i];
      }
    });
  }
  return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, int offset, int len) {
  require_2d(x, "slice_cols");
  if (offset < 0 || len <= 0 || offset + len > x.dim(1))
    throw std::invalid_argument(
        "slice_cols: range [" + std::to_string(offset) + ", " +
        std::to_string(offset + len) + ") outside " + shape_str(x.shape()));
  const int m = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros({m, len}, flows(x));
  for (int i = 0; i < m; ++i)
    std::copy(x.data() + static_cast<int64_t>(i) * d + offset,
              x.data() + static_cast<int64_t>(i) * d + offset + len,
              out.data() + static_cast<int64_t>(i) * len);
  if (tape.recording() && out.requires_grad()) {
    Tensor xc = x;
    tape.record([xc, out, m, d, offset, len]() mutable {
      if (!out.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < len; ++j)
          xc.grad()[static_cast<int64_t>(i) * d + offset + j] +=
              out.grad()[static_cast<int64_t>(i) * len + j];
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  const int m = parts[0].dim(0);
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.dim(0) != m)
      throw std::invalid_argument("concat_cols: row mismatch: " +
                                  shape_str(parts[0].shape()) + " vs " +
                                  shape_str(p.shape()));
    total += p.dim(1);
    rg = rg || flows(p);
  }
  Tensor out = Tensor::zeros({m, total}, rg);
  int off = 0;
  for (const auto& p : parts) {
    const int d = p.dim(1);
    for (int i = 0; i < m; ++i)
      std::copy(p.data() + static_cast<int64_t>(i) * d,
                p.data() + static_cast<int64_t>(i) * d + d,
                out.data() + static_cast<int64_t>(i) * total + off);
    off += d;
  }
  if (tape.recording() && out.requires_grad()) {
    std::vector<Tensor> pc(parts.begin(), parts.end());
    tape.record([pc, out, m, total]() mutable {
      if (!out.has_grad()) return;
      int off2 = 0;
      for (auto& p : pc) {
        const int d = p.dim(1);
        if (p.requires_grad()) {
          p.ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < d; ++j)
              p.grad()[static_cast<int64_t>(i) * d + j] +=
                  out.grad()[static_cast<int64_t>(i) * total + off2 + j];
        }
        off2 += d;
      }
    });
  }
  return out;
}

Tensor embedding_lookup(Tape& tape, const Tensor& table,
                        const std::vector<int>& ids) {
  require_2d(table, "embedding_lookup");
  if (ids.empty())
    throw std::invalid_argument("embedding_lookup: empty id sequence");
  const int V = table.dim(0), d = table.dim(1);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= V)
      throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) +
                              " at position " + std::to_string(i) +
                              " outside vocabulary [0, " + std::to_string(V) +
                              ")");
  }
  const int m = static_cast<int>(ids.size());
  Tensor out = Tensor::zeros({m, d}, flows(table));
  for (int i = 0; i < m; ++i)
    std::copy(table.data() + static_cast<int64_t>(ids[i]) * d,
              table.data() + static_cast<int64_t>(ids[i]) * d + d,
              out.data() + static_cast<int64_t>(i) * d);
  if (tape.recording() && out.requires_grad()) {
    Tensor tc = table;
    tape.record([tc, out, ids, m, d]() mutable {
      if (!out.has_grad() || !tc.requires_grad()) return;
      tc.ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < d; ++j)
          tc.grad()[static_cast<int64_t>(ids[i]) * d + j] +=
              out.grad()[static_cast<int64_t>(i) * d + j];
    });
  }
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& x, bool causal) {
  require_2d(x, "softmax_rows");
  const int rows = x.dim(0), cols = x.dim(1);
  if (causal && rows > cols)
    throw std::invalid_argument(
        "softmax_rows: causal mask needs rows <= cols, got " +
        shape_str(x.shape()));
  Tensor out = Tensor::zeros({rows, cols}, flows(x));
  kern::softmax_rows(rows, cols, x.data(), out.data(), causal);
  if (tape.recording() && out.requires_grad()) {
    Tensor xc = x;
    tape.record([xc, out, rows, cols]() mutable {
      if (!out.has_grad() || !xc.requires_grad()) return;
      xc.ensure_grad();
      for (int i = 0; i < rows; ++i) {
        const double* p = out.data() + static_cast<int64_t>(i) * cols;
        const double* g = out.grad() + static_cast<int64_t>(i) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += p[j] * g[j];
        double* gx = xc.grad() + static_cast<int64_t>(i) * cols;
        for (int j = 0; j < cols; ++j) gx[j] += p[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain,
                  const Tensor& bias, double eps) {
  require_2d(x, "layer_norm");
  const int rows = x.dim(0), d = x.dim(1);
  if (gain.ndim() != 1 || gain.dim(0) != d || bias.ndim() != 1 ||
      bias.dim(0) != d)
    throw std::invalid_argument("layer_norm: gain/bias must be [" +
                                std::to_string(d) + "], got " +
                                shape_str(gain.shape()) + " and " +
                                shape_str(bias.shape()));
  Tensor out =
      Tensor::zeros({rows, d}, flows(x) || flows(gain) || flows(bias));
  auto mean = std::make_shared<std::vector<double>>(rows);
  auto rstd = std::make_shared<std::vector<double>>(rows);
  kern::layernorm_rows(rows, d, x.data(), gain.data(), bias.data(), eps,
                       out.data(), mean->data(), rstd->data());
  if (tape.recording() && out.requires_grad()) {
    Tensor xc = x, gc = gain, bc = bias;
    tape.record([xc, gc, bc, out, mean, rstd, rows, d]() mutable {
      if (!out.has_grad()) return;
      for (int i = 0; i < rows; ++i) {
        const double* xi = xc.data() + static_cast<int64_t>(i) * d;
        const double* gy = out.grad() + static_cast<int64_t>(i) * d;
        const double mu = (*mean)[i];
        const double r = (*rstd)[i];
        if (gc.requires_grad()) {
          gc.ensure_grad();
          for (int j = 0; j < d; ++j)
            gc.grad()[j] += gy[j] * (xi[j] - mu) * r;
        }
        if (bc.requires_grad()) {
          bc.ensure_grad();
          for (int j = 0; j < d; ++j) bc.grad()[j] += gy[j];
        }
        if (xc.requires_grad()) {
          xc.ensure_grad();
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < d; ++j) {
            const double gg = gy[j] * gc.data()[j];
            m1 += gg;
            m2 += gg * (xi[j] - mu) * r;
          }
          m1 /= d;
          m2 /= d;
          double* gx = xc.grad() + static_cast<int64_t>(i) * d;
          for (int j = 0; j < d; ++j) {
            const double gg = gy[j] * gc.data()[j];
            const double xhat = (xi[j] - mu) * r;
            gx[j] += r * (gg - m1 - xhat * m2);
          }
        }
      }
    });
  }
  return out;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits,
                             const std::vector<int>& targets) {
  require_2d(logits, "softmax_cross_entropy");
  const int rows = logits.dim(0), cols = logits.dim(1);
  if (static_cast<int>(targets.size()) != rows)
    throw std::invalid_argument(
        "softmax_cross_entropy: " + std::to_string(targets.size()) +
        " targets for " + std::to_string(rows) + " rows");
  for (size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= cols)
      throw std::out_of_range("softmax_cross_entropy: target " +
                              std::to_string(targets[i]) + " at row " +
                              std::to_string(i) + " outside [0, " +
                              std::to_string(cols) + ")");
  }
  std::vector<double> loss(rows);
  auto probs = std::make_shared<std::vector<double>>();
  double* probs_ptr = nullptr;
  const bool rg = flows(logits);
  if (rg) {
    probs->assign(static_cast<size_t>(rows) * cols, 0.0);
    probs_ptr = probs->data();
  }
  kern::nll_rows(rows, cols, logits.data(), targets.data(), loss.data(),
                 probs_ptr);
  double total = 0.0;
  for (double l : loss) total += l;
  Tensor out = Tensor::scalar(total / rows, rg);
  if (tape.recording() && out.requires_grad()) {
    Tensor lc = logits;
    tape.record([lc, out, probs, targets, rows, cols]() mutable {
      if (!out.has_grad() || !lc.requires_grad()) return;
      lc.ensure_grad();
      const double g = out.grad()[0] / rows;
      for (int i = 0; i < rows; ++i) {
        const double* pi = probs->data() + static_cast<int64_t>(i) * cols;
        double* gi = lc.grad() + static_cast<int64_t>(i) * cols;
        for (int j = 0; j < cols; ++j) gi[j] += g * pi[j];
        gi[targets[i]] -= g;
      }
    });
  }
  return out;
}

}  // namespace spt::ops
