#include "advkit/attention.hpp"

#include <algorithm>
#include <cmath>

#include "advkit/netpbm.hpp"
#include "advkit/ops.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

namespace {

void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw InvalidShape(std::string(what) + " must be [C,H,W], got " + shape_str(t.shape()));
}

void require_same_grid(const Tensor& image, const Tensor& fm) {
  if (image.size(1) != fm.size(1) || image.size(2) != fm.size(2)) {
    throw InvalidShape("feature map grid " + shape_str(fm.shape()) + " differs from image grid " +
                       shape_str(image.shape()));
  }
}

// [C,H,W] -> [C, H*W]
Tensor flatten_spatial(const Tensor& t) { return reshape(t, Shape{t.size(0), t.size(1) * t.size(2)}); }

}  // namespace

ChannelAttention channel_attention(const Tensor& image, const Tensor& fm_up) {
  require_image(image, "image");
  require_image(fm_up, "feature map");
  require_same_grid(image, fm_up);
  const Tensor scores = matmul(flatten_spatial(image), transpose(flatten_spatial(fm_up)));
  return ChannelAttention{softmax(scores, 1)};
}

PixelAttention pixel_attention(const ChannelAttention& channel, const Tensor& fm_up, const Tensor& image) {
  require_image(image, "image");
  require_image(fm_up, "feature map");
  require_same_grid(image, fm_up);
  const Tensor& wc = channel.weights;
  if (wc.rank() != 2 || wc.size(0) != image.size(0) || wc.size(1) != fm_up.size(0)) {
    throw InvalidShape("channel attention " + shape_str(wc.shape()) + " does not match image channels " +
                       std::to_string(image.size(0)) + " and feature channels " + std::to_string(fm_up.size(0)));
  }
  const Tensor wc_re = matmul(wc, flatten_spatial(fm_up));         // [C_in, l]
  const Tensor column_sums = sum(mul(wc_re, flatten_spatial(image)), 0);  // [l]
  const std::size_t l = column_sums.numel();
  return PixelAttention{softmax(reshape(column_sums, Shape{1, l}), 1)};
}

AttentionMap attention_map(const PixelAttention& pixel, std::size_t height, std::size_t width) {
  const Tensor& wp = pixel.weights;
  if (wp.numel() != height * width) {
    throw InvalidShape("pixel attention has " + std::to_string(wp.numel()) + " entries, map needs " +
                       std::to_string(height * width));
  }
  return AttentionMap{reshape(wp, Shape{1, height, width})};
}

Tensor shape_perturbation(const Tensor& grad, const AttentionMap& map) {
  require_image(grad, "gradient");
  const std::size_t c = grad.size(0), h = grad.size(1), w = grad.size(2);
  if (map.weights.rank() != 3 || map.height() != h || map.width() != w) {
    throw InvalidShape("attention map " + shape_str(map.weights.shape()) + " does not cover gradient " +
                       shape_str(grad.shape()));
  }
  double l1 = 0;
  for (Real g : grad.data()) l1 += std::abs(static_cast<double>(g));
  if (l1 == 0) throw ZeroGradient("gradient vanished; cannot shape a perturbation");
  Tensor out(grad.shape());
  const auto gd = grad.data();
  const auto md = map.weights.data();
  auto od = out.mutable_data();
  const std::size_t plane = h * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < plane; ++p) {
      od[ch * plane + p] = static_cast<Real>(static_cast<double>(md[p]) * (static_cast<double>(gd[ch * plane + p]) / l1));
    }
  }
  return out;
}

AttentionMap compute_attention(const Tensor& image, const Tensor& feature_map) {
  require_image(image, "image");
  require_image(feature_map, "feature map");
  const std::size_t h = image.size(1), w = image.size(2);
  const Tensor fm_up = bilinear_upsample(feature_map, h, w);
  const ChannelAttention wc = channel_attention(image, fm_up);
  const PixelAttention wp = pixel_attention(wc, fm_up, image);
  return attention_map(wp, h, w);
}

void save_attention_pgm(const AttentionMap& map, const std::filesystem::path& path) {
  const auto d = map.weights.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double span = static_cast<double>(*hi - *lo);
  Image8 img(map.width(), map.height());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double v = span > 0 ? (static_cast<double>(d[i] - *lo) / span) : 0.0;
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_pgm(img, path);
}

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
