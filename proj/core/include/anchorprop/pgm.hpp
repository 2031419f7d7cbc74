#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "anchorprop/propagation.hpp"
#include "anchorprop/types.hpp"

namespace anchorprop {

/// 8-bit grayscale raster.
struct GrayImage {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary PGM (P5, maxval 255). Header is exactly "P5\n<w> <h>\n255\n".
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Heat values scaled by 255 and rounded to nearest.
GrayImage heatmap_to_gray(const HeatMap& heat);
/// Set bits become 255, others 0.
GrayImage mask_to_gray(const BinaryMask& mask);
GrayImage mask_to_gray(const PixelMask& mask);

/// Nonzero pixels are set.
PixelMask gray_to_mask(const GrayImage& image);

}  // namespace anchorprop
