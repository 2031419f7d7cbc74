#pragma once

#include "anchorprop/types.hpp"

namespace anchorprop {

/// Peak concept-to-image response for one concept.
struct Anchor {
  int concept_index = 0;
  int token_index = 0;
  double response_value = 0.0;
  int tie_count = 0;  // tokens attaining the maximum; N for a flat row
};

/// Smallest token index attaining the row maximum of a_ci_mean[k].
Anchor select_anchor(const MatrixF& a_ci_mean, int k);

/// Pixel coordinates (x, y) of a token's patch center on a pixel_h x pixel_w image.
struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
};
PixelPoint token_center(int token, const GridShape& grid, int pixel_h, int pixel_w);

/// True iff the anchor's patch center lies inside `mask`.
bool anchor_hit(const Anchor& anchor, const PixelMask& mask, const GridShape& grid);

}  // namespace anchorprop
