#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "advkit/model.hpp"
#include "advkit/tensor.hpp"

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

/// Images [N,C,H,W] with pixels in [0,1] and integer labels.
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 10;

  std::size_t size() const { return labels.size(); }
  ImageShape image_shape() const;
  /// Copy of image `i` as [1,C,H,W].
  Tensor image(std::size_t i) const;
  Dataset subset(std::size_t first, std::size_t count) const;
  Dataset select(const std::vector<std::size_t>& indices) const;
  /// Throws InvalidArgument when a label or pixel is out of range.
  void validate() const;
};

/// IDX pair: images (magic 0x00000803, u8 [N,H,W]) and labels (0x00000801).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
void save_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels);

/// CIFAR-10 binary batches: 3073-byte records (label, 1024 R, 1024 G, 1024 B).
Dataset load_cifar10(const std::vector<std::filesystem::path>& batches);
void save_cifar10(const Dataset& ds, const std::filesystem::path& path);

/// Labels file paired with an IDX images file: "images"->"labels" and
/// "idx3"->"idx1" in the file name, or ".labels" appended when neither occurs.
std::filesystem::path idx_labels_path_for(const std::filesystem::path& images);

/// Rendering knobs for synthesize_digits. Ink is the stroke intensity drawn
/// uniformly from [ink_min, ink_max] per image.
struct DigitStyle {
  double ink_min = 0.35;
  double ink_max = 0.65;
  double half_width = 1.15;
  double width_jitter = 0.45;
  double noise = 0.03;
};

/// Procedurally rendered 28x28 handwriting-like digits 0-9 (stroke glyphs
/// under random affine jitter, stroke width and noise). Deterministic per seed;
/// classes cycle so every class is balanced.
Dataset synthesize_digits(std::size_t count, std::uint64_t seed, const DigitStyle& style = {});

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
