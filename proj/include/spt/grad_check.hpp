#pragma once

#include <functional>

#include "spt/tensor.hpp"

namespace spt {

// Central-difference gradient of a scalar-valued function, one coordinate at
// a time: (f(x + h·e_i) − f(x − h·e_i)) / 2h. Throws std::domain_error if f
// produces a non-finite value.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f,
                              const Tensor& x, double h = 1e-4);

// max_i |a_i − b_i| / max(|a_i|, |b_i|, 1)
double max_rel_diff(const Tensor& a, const Tensor& b);

// Compares the tape gradient of `leaf` against finite differences for the
// scalar graph built by `forward`. The forward callback must read `leaf` and
// may be invoked many times; it receives a non-recording tape for the
// numeric probes. Returns the max relative error.
double gradient_check(const std::function<Tensor(Tape&)>& forward, Tensor leaf,
                      double h = 1e-4);

}  // namespace spt
