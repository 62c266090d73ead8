#pragma once

#include <cstddef>
#include <span>

#include "advkit/tape.hpp"
#include "advkit/tensor.hpp"

// Differentiable tensor operations. Binary elementwise operations accept
// equal shapes or a single-element operand; nothing else broadcasts.

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, Real b);
Tensor mul(const Tensor& a, Real b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, Real b) { return mul(a, b); }
inline Tensor operator*(Real a, const Tensor& b) { return mul(b, a); }

Tensor relu(const Tensor& x);
/// Gradient is identically zero.
Tensor sign(const Tensor& x);
/// Gradient passes where lo <= x <= hi, zero elsewhere.
Tensor clamp(const Tensor& x, Real lo, Real hi);
Tensor abs(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor sum(const Tensor& x);
/// Reduces over `axis`, dropping it from the shape.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);
Tensor l1_norm(const Tensor& x);
/// Gradient at the origin is defined as zero.
Tensor l2_norm(const Tensor& x);
/// Gradient flows to the first maximal-magnitude element.
Tensor linf_norm(const Tensor& x);

/// Single element of `x` at a flat row-major index, as a scalar tensor.
Tensor pick(const Tensor& x, std::size_t flat_index);
Tensor reshape(const Tensor& x, Shape shape);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

/// input [N,C,H,W], kernel [F,C,kh,kw] -> [N,F,H',W'].
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);
/// x [N,C,H,W] plus bias [C] broadcast over batch and space.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
Tensor max_pool2d(const Tensor& x, std::size_t window, std::size_t stride);
/// x [N,in], weight [out,in], bias [out] -> [N,out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Mean cross-entropy of logits [N,K] against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Bilinear resampling of [C,h,w] or [N,C,h,w] with half-pixel centres.
Tensor bilinear_resize(const Tensor& x, std::size_t height, std::size_t width);
/// bilinear_resize restricted to targets no smaller than the source.
Tensor bilinear_upsample(const Tensor& x, std::size_t height, std::size_t width);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
