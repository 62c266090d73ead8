#pragma once

#include <filesystem>

#include "advkit/model.hpp"

// Weight container, little-endian:
//   "ADVW", u32 version, architecture descriptor
//   (u32 name length + bytes, u32 C,H,W, u32 classes, i32 tap or -1),
//   u32 tensor count, then per tensor: u32 name length + bytes, TNSR block.

namespace advkit {
inline namespace ADVKIT_PRECISION_NS {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

void save_weights(const Model& model, const std::filesystem::path& path);

/// Rebuilds the model from the stored architecture descriptor.
Model load_weights(const std::filesystem::path& path);

/// Loads parameters into an existing model; InvalidShape when the stored
/// tensors do not fit its architecture.
void load_weights_into(Model& model, const std::filesystem::path& path);

}  // namespace ADVKIT_PRECISION_NS
}  // namespace advkit
