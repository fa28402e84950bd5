#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "svtr/tensor.hpp"

namespace svtr {

/// 8-bit raster, interleaved channels (1 = gray, 3 = RGB).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
};

/// Reads P2/P3/P5/P6 with maxval <= 255.
Image8 read_pnm(const std::filesystem::path& path);
/// Writes binary PGM (1 channel) or PPM (3 channels).
void write_pnm(const std::filesystem::path& path, const Image8& image);

/// Nearest-neighbour resize to height x width, scaled to [0,1]; gray input is
/// replicated across the three channels. Result is [3, height, width].
Tensor image_to_tensor(const Image8& image, std::size_t height, std::size_t width);
/// [3,H,W] or [1,H,W] in [0,1] to 8-bit, rounding to the nearest level.
Image8 tensor_to_image(const Tensor& chw);

}  // namespace svtr
