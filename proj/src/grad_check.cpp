#include "spt/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace spt {

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite differences need h > 0");
  Tensor probe = x.clone();
  Tensor g = Tensor::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + h;
    const double fp = f(probe);
    probe.data()[i] = saved - h;
    const double fm = f(probe);
    probe.data()[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::domain_error(
          "finite_difference_grad: non-finite function value at coordinate " +
          std::to_string(i));
    g.data()[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double max_rel_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("max_rel_diff: shape mismatch " +
                                shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  double worst = 0.0;
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double av = a.data()[i], bv = b.data()[i];
    const double denom = std::max({std::fabs(av), std::fabs(bv), 1.0});
    worst = std::max(worst, std::fabs(av - bv) / denom);
  }
  return worst;
}

double gradient_check(const std::function<Tensor(Tape&)>& forward, Tensor leaf,
                      double h) {
  // Tape side.
  leaf.drop_grad();
  Tape tape;
  Tensor loss = forward(tape);
  tape.backward(loss);
  if (!leaf.has_grad())
    throw std::domain_error("gradient_check: no gradient reached the leaf");
  Tensor ad = Tensor::from_data(leaf.shape(), leaf.grad_vec());

  // Numeric side: write the probe into the shared leaf storage and re-run.
  auto f = [&](const Tensor& probe) {
    std::copy(probe.data(), probe.data() + probe.numel(), leaf.data());
    Tape inf = Tape::inference();
    return forward(inf).item();
  };
  Tensor base = leaf.clone();
  Tensor fd = finite_difference_grad(f, base, h);
  std::copy(base.data(), base.data() + base.numel(), leaf.data());
  leaf.drop_grad();
  return max_rel_diff(ad, fd);
}

}  // namespace spt
