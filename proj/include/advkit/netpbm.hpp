#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace advkit {

/// 8-bit image with `channels` interleaved samples per pixel (1 or 3).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(std::size_t w, std::size_t h, std::size_t c = 1) : width(w), height(h), channels(c), pixels(w * h * c, 0) {}
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const { return pixels[(y * width + x) * channels + c]; }
};

using GrayImage = Image8;

/// Binary P5 (1 channel) or P6 (3 channels), chosen from img.channels.
void write_netpbm(const Image8& img, const std::filesystem::path& path);
inline void write_pgm(const Image8& img, const std::filesystem::path& path) { write_netpbm(img, path); }
Image8 read_netpbm(const std::filesystem::path& path);

}  // namespace advkit
