#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace anchorprop {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Latent token grid. Tokens are indexed row-major: index = row * w + col.
struct GridShape {
  int h = 0;
  int w = 0;

  int n() const { return h * w; }
  int row_of(int token) const { return token / w; }
  int col_of(int token) const { return token % w; }
  bool operator==(const GridShape&) const = default;
};

/// Validates h >= 2 and w >= 2; throws ValidationError otherwise.
void check_grid(const GridShape& grid);

/// Binary image at pixel resolution, row-major.
struct PixelMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> bits;

  PixelMask() = default;
  PixelMask(int height, int width, bool fill = false)
      : h(height), w(width), bits(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

  std::size_t size() const { return bits.size(); }
  bool at(int y, int x) const { return bits[static_cast<std::size_t>(y) * w + x] != 0; }
  void set(int y, int x, bool v) { bits[static_cast<std::size_t>(y) * w + x] = v ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const PixelMask&) const = default;
};

/// Real-valued image at pixel resolution, row-major.
struct PixelMap {
  int h = 0;
  int w = 0;
  std::vector<double> values;

  PixelMap() = default;
  PixelMap(int height, int width, double fill = 0.0)
      : h(height), w(width), values(static_cast<std::size_t>(height) * width, fill) {}

  std::size_t size() const { return values.size(); }
  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * w + x]; }
};

}  // namespace anchorprop
