#include "advkit/tensor.hpp"

#include <sstream>

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : s_(std::make_shared<TensorStorage>()) { s_->shape = {0}; }

Tensor::Tensor(Shape shape, Real fill) : s_(std::make_shared<TensorStorage>()) {
  s_->data.assign(shape_numel(shape), fill);
  s_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : s_(std::make_shared<TensorStorage>()) {
  if (shape_numel(shape) != values.size()) {
    throw InvalidShape("tensor shape " + shape_str(shape) + " does not hold " +
                       std::to_string(values.size()) + " values");
  }
  s_->shape = std::move(shape);
  s_->data = std::move(values);
}

Tensor Tensor::scalar(Real value) { return Tensor(Shape{1}, std::vector<Real>{value}); }

Tensor Tensor::uniform(Shape shape, Real lo, Real hi, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.mutable_data()) v = static_cast<Real>(dist(rng));
  return t;
}

Tensor Tensor::normal(Shape shape, Real mean, Real stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : t.mutable_data()) v = static_cast<Real>(dist(rng));
  return t;
}

std::size_t Tensor::size(std::size_t dim) const {
  if (dim >= rank()) {
    throw InvalidArgument("dimension " + std::to_string(dim) + " out of range for shape " +
                          shape_str(shape()));
  }
  return s_->shape[dim];
}

Real Tensor::item() const {
  if (numel() != 1) throw InvalidShape("item() on tensor of shape " + shape_str(shape()));
  return s_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  s_->requires_grad = on;
  return *this;
}

Tensor Tensor::grad_tensor() const {
  if (!has_grad()) return Tensor(shape());
  return Tensor(shape(), s_->grad);
}

Tensor Tensor::clone() const { return Tensor(shape(), s_->data); }

Tensor Tensor::reshaped_copy(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw InvalidShape("cannot reshape " + shape_str(this->shape()) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), s_->data);
}

std::vector<Real>& Tensor::grad_buffer() const {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), Real(0));
  return s_->grad;
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
