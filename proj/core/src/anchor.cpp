#include "anchorprop/anchor.hpp"

#include <cmath>
#include <string>

#include "anchorprop/error.hpp"

namespace anchorprop {

Anchor select_anchor(const MatrixF& a_ci_mean, int k) {
  if (k < 0 || k >= a_ci_mean.rows()) {
    throw ValidationError("concept index " + std::to_string(k) + " out of range [0, " +
                          std::to_string(a_ci_mean.rows()) + ")");
  }
  if (a_ci_mean.cols() == 0) throw ValidationError("empty concept response row");
  Anchor a;
  a.concept_index = k;
  float best = a_ci_mean(k, 0);
  int best_index = 0;
  int ties = 1;
  for (Eigen::Index i = 1; i < a_ci_mean.cols(); ++i) {
    const float v = a_ci_mean(k, i);
    if (v > best) {
      best = v;
      best_index = static_cast<int>(i);
      ties = 1;
    } else if (v == best) {
      ++ties;
    }
  }
  a.token_index = best_index;
  a.response_value = best;
  a.tie_count = ties;
  return a;
}

PixelPoint token_center(int token, const GridShape& grid, int pixel_h, int pixel_w) {
  const int row = grid.row_of(token);
  const int col = grid.col_of(token);
  return {(col + 0.5) * pixel_w / grid.w, (row + 0.5) * pixel_h / grid.h};
}

bool anchor_hit(const Anchor& anchor, const PixelMask& mask, const GridShape& grid) {
  if (mask.h < grid.h || mask.w < grid.w) {
    throw ValidationError("mask " + std::to_string(mask.h) + "x" + std::to_string(mask.w) +
                          " is smaller than token grid " + std::to_string(grid.h) + "x" +
                          std::to_string(grid.w));
  }
  if (anchor.token_index < 0 || anchor.token_index >= grid.n()) {
    throw ValidationError("anchor token outside grid");
  }
  const PixelPoint p = token_center(anchor.token_index, grid, mask.h, mask.w);
  // The center falls inside pixel (floor(y), floor(x)).
  const int px = std::min(mask.w - 1, static_cast<int>(std::floor(p.x)));
  const int py = std::min(mask.h - 1, static_cast<int>(std::floor(p.y)));
  return mask.at(py, px);
}

}  // namespace anchorprop
