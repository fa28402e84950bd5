#include "svtr/tensor.hpp"

#include <algorithm>
#include <atomic>

namespace svtr {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

void validate_shape(const Shape& shape) {
  SVTR_REQUIRE(!shape.empty() && shape.size() <= 4, ErrorKind::kShape,
          "tensor rank must be 1..4, got " + shape_str(shape));
  SVTR_REQUIRE(std::all_of(shape.begin(), shape.end(), [](std::size_t d) { return d > 0; }),
          ErrorKind::kShape, "tensor extents must be positive, got " + shape_str(shape));
}

namespace detail {

std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) {
  validate_shape(shape);
  impl_ = std::make_shared<Impl>();
  impl_->data.assign(svtr::numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values) {
  validate_shape(shape);
  SVTR_REQUIRE(values.size() == svtr::numel(shape), ErrorKind::kShape,
          "tensor of shape " + shape_str(shape) + " needs " +
              std::to_string(svtr::numel(shape)) + " values, got " +
              std::to_string(values.size()));
  impl_ = std::make_shared<Impl>();
  impl_->data = std::move(values);
  impl_->shape = std::move(shape);
}

template <typename T>
std::size_t BasicTensor<T>::dim(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  SVTR_REQUIRE(a >= 0 && a < r, ErrorKind::kShape,
          "axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T BasicTensor<T>::item() const {
  SVTR_REQUIRE(numel() == 1, ErrorKind::kContract,
          "item() needs a single-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

template <typename T>
void BasicTensor<T>::zero_grad() {
  if (impl_->grad.empty()) return;
  std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  BasicTensor out(impl_->shape, impl_->data);
  out.impl_->requires_grad = impl_->requires_grad;
  out.impl_->grad = impl_->grad;
  return out;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(impl_->shape, impl_->data);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace svtr
