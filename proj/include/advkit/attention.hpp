#pragma once

#include <filesystem>

#include "advkit/tensor.hpp"

// Attention-guided weighting of input pixels from a shallow feature map.
//
//   channel:  W_c = softmax_rows( I[C_in x l] * fm[c x l]^T )      [C_in x c]
//   pixel:    W_p = softmax( colsum( (W_c * fm) .* I ) )            [1 x l]
//   map:      W_map = reshape(W_p, H, W)                            [1,H,W]
//
// with l = H*W, I the clean image and fm the feature map bilinearly
// upsampled to the image grid.

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

struct ChannelAttention {
  Tensor weights;  // [C_in, c], rows sum to 1
};

struct PixelAttention {
  Tensor weights;  // [1, l], sums to 1
};

struct AttentionMap {
  Tensor weights;  // [1, H, W]
  std::size_t height() const { return weights.size(1); }
  std::size_t width() const { return weights.size(2); }
};

/// image [C_in,H,W], fm_up [c,H,W].
ChannelAttention channel_attention(const Tensor& image, const Tensor& fm_up);
PixelAttention pixel_attention(const ChannelAttention& channel, const Tensor& fm_up, const Tensor& image);
AttentionMap attention_map(const PixelAttention& pixel, std::size_t height, std::size_t width);

/// W_map (broadcast over channels) times grad / ||grad||_1. Throws
/// ZeroGradient when the gradient vanishes.
Tensor shape_perturbation(const Tensor& grad, const AttentionMap& map);

/// Upsamples `feature_map` [c,h,w] to the image grid and runs the
/// channel -> pixel -> map pipeline.
AttentionMap compute_attention(const Tensor& image, const Tensor& feature_map);

/// 8-bit binary PGM, min-max normalised (a constant map renders black).
void save_attention_pgm(const AttentionMap& map, const std::filesystem::path& path);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
