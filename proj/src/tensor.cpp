#include "pses/tensor.hpp"

#include <sstream>

namespace pses {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (int64_t e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
}
}  // namespace

template <typename S>
Tensor<S> Tensor<S>::zeros(Shape shape) {
  check_shape(shape);
  Tensor t;
  t.impl_ = std::make_shared<TensorData<S>>();
  t.impl_->value.assign(static_cast<size_t>(shape_numel(shape)), S(0));
  t.impl_->shape = std::move(shape);
  return t;
}

template <typename S>
Tensor<S> Tensor<S>::full(Shape shape, S v) {
  Tensor t = zeros(std::move(shape));
  for (S& x : t.impl_->value) x = v;
  return t;
}

template <typename S>
Tensor<S> Tensor<S>::from(Shape shape, std::vector<S> data) {
  check_shape(shape);
  if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<TensorData<S>>();
  t.impl_->shape = std::move(shape);
  t.impl_->value = std::move(data);
  return t;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace pses
