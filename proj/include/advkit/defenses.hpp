#pragma once

#include <string>
#include <vector>

#include "advkit/model.hpp"
#include "advkit/tensor.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

enum class DefenseKind { kNone, kGaussianBlur, kInputTransform };

std::string defense_name(DefenseKind kind);
/// Accepts "none", "blur" / "gaussian-blur", "transform" / "input-transform".
DefenseKind parse_defense(const std::string& name);

struct DefenseConfig {
  DefenseKind kind = DefenseKind::kNone;
  double sigma = 1.0;
  int kernel_size = 3;
  double transform_scale = 2.0;
  int quantization_levels = 32;

  /// Throws InvalidArgument on an even/non-positive kernel, sigma <= 0,
  /// scale < 1 or fewer than two levels.
  void validate() const;
};

/// Normalised 1-D Gaussian taps at offsets -r..r, r = size/2.
std::vector<double> gaussian_kernel_1d(int size, double sigma);
/// Outer product of gaussian_kernel_1d with itself, row-major size x size.
std::vector<double> gaussian_kernel_2d(int size, double sigma);

/// Per-channel separable blur of [C,H,W] or [N,C,H,W] with mirrored borders
/// (edge sample repeated), which preserves the image sum.
Tensor gaussian_blur(const Tensor& x, double sigma, int kernel_size);

/// Bilinear downsample by `scale`, bilinear upsample back, quantise to
/// `levels` uniform levels in [0,1].
Tensor input_transform(const Tensor& x, double scale, int levels);

/// The configured filter; kNone returns a copy.
Tensor apply_defense(const Tensor& x, const DefenseConfig& cfg);

/// Logits of model(defense(x)). The filter is never differentiated.
Tensor defended_forward(const Model& model, const DefenseConfig& cfg, const Tensor& x);
std::vector<int> defended_predict(const Model& model, const DefenseConfig& cfg, const Tensor& x);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
