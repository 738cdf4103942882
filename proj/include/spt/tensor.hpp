#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "spt/rng.hpp"

namespace spt {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense f64 tensor, row-major, shared-storage handle: copies alias the same
// buffer. The grad buffer is allocated lazily; its presence is what the
// optimizer keys updates on.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& vec() { return impl_->data; }
  const std::vector<double>& vec() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return !impl_->grad.empty(); }
  double* grad() { return impl_->grad.data(); }
  const double* grad() const { return impl_->grad.data(); }
  std::vector<double>& grad_vec() { return impl_->grad; }
  const std::vector<double>& grad_vec() const { return impl_->grad; }
  // Allocates a zeroed grad buffer if absent.
  void ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  }
  void zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }
  void drop_grad() {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }

  double item() const;
  double at(int i) const { return impl_->data[static_cast<size_t>(i)]; }
  double at(int i, int j) const {
    return impl_->data[static_cast<size_t>(i) * dim(1) + j];
  }

  // Deep copy of the values (no grad, same requires_grad flag).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const {
    return impl_ == other.impl_;
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty = absent
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;

  static Tensor make(Shape shape, std::vector<double> data,
                     bool requires_grad);
};

using NamedTensor = std::pair<std::string, Tensor>;

// Reverse-mode tape: backward rules are recorded in execution order (which is
// topological by construction) and replayed in reverse, accumulating into
// the grad buffers additively.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  static Tape inference() { return Tape(false); }

  bool recording() const { return recording_; }
  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }
  size_t num_ops() const { return ops_.size(); }

  // Seeds d(loss)/d(loss) = 1 on the scalar loss and replays the tape.
  void backward(Tensor loss);

  void clear() { ops_.clear(); }

 private:
  bool recording_;
  std::vector<std::function<void()>> ops_;
};

}  // namespace spt
