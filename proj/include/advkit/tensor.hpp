#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advkit/errors.hpp"
#include "advkit/precision.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorStorage {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
};

/// Dense row-major tensor. Copies share storage (handle semantics, as the
/// autograd tape needs stable identities); use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor scalar(Real value);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), Real(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), Real(1)); }
  static Tensor full(Shape shape, Real value) { return Tensor(std::move(shape), value); }
  static Tensor uniform(Shape shape, Real lo, Real hi, std::mt19937_64& rng);
  static Tensor normal(Shape shape, Real mean, Real stddev, std::mt19937_64& rng);

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t size(std::size_t dim) const;
  std::size_t numel() const { return s_->data.size(); }

  std::span<const Real> data() const { return s_->data; }
  std::span<Real> mutable_data() { return s_->data; }
  Real item() const;

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !s_->grad.empty(); }
  /// Empty span when no gradient has been accumulated.
  std::span<const Real> grad() const { return s_->grad; }
  /// Gradient as a detached tensor of the same shape (zeros when absent).
  Tensor grad_tensor() const;
  void zero_grad() { s_->grad.clear(); }

  /// Deep copy of the values; the copy does not require grad.
  Tensor clone() const;
  Tensor reshaped_copy(Shape shape) const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  // Autograd internals.
  std::vector<Real>& grad_buffer() const;
  TensorStorage& storage() const { return *s_; }

 private:
  std::shared_ptr<TensorStorage> s_;
};

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
