#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pses/errors.hpp"

namespace pses {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

template <typename S>
struct TensorData {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty unless this tensor tracks gradients
  bool requires_grad = false;
};

/// Dense N-dimensional array with value semantics over a shared payload.
/// Image tensors use NCHW order. `S` is float for model execution and
/// double for the shadow evaluation used by gradient-check tests.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, S v);
  static Tensor from(Shape shape, std::vector<S> data);
  static Tensor scalar(S v) { return full({1}, v); }
  static Tensor zeros_like(const Tensor& t) { return zeros(t.shape()); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t rank() const { return static_cast<int64_t>(impl_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(impl_->value.size()); }
  int64_t extent(int64_t axis) const { return impl_->shape[axis]; }

  S* data() { return impl_->value.data(); }
  const S* data() const { return impl_->value.data(); }
  std::vector<S>& values() { return impl_->value; }
  const std::vector<S>& values() const { return impl_->value; }

  /// Value of a single-element tensor.
  S item() const {
    if (numel() != 1) throw ContractError("item() requires a single-element tensor, got " + shape_str(shape()));
    return impl_->value[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    if (v) ensure_grad();
    return *this;
  }

  /// True when a gradient buffer exists (leaf with requires_grad, or an
  /// intermediate recorded on a tape).
  bool tracks_grad() const { return defined() && !impl_->grad.empty(); }
  void ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), S(0));
  }
  S* grad() { return impl_->grad.empty() ? nullptr : impl_->grad.data(); }
  const S* grad() const { return impl_->grad.empty() ? nullptr : impl_->grad.data(); }
  std::vector<S>& grad_vec() { return impl_->grad; }
  void zero_grad() {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), S(0));
  }

  const std::shared_ptr<TensorData<S>>& impl() const { return impl_; }

  bool same_payload(const Tensor& other) const { return impl_ == other.impl_; }

  /// Copy of this tensor with an independent payload and no grad tracking.
  Tensor clone_values() const {
    return from(shape(), impl_->value);
  }

 private:
  std::shared_ptr<TensorData<S>> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace pses
