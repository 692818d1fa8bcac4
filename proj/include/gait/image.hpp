#pragma once

#include <vector>

#include "gait/tensor.hpp"

/// Small single-channel image helpers backing ingestion. Images are (H, W)
/// float tensors; flow fields are (2, H, W) with channel 0 horizontal.
namespace gait::img {

TensorF resize_bilinear(const TensorF& img, int oh, int ow);

/// Flip the horizontal axis.
TensorF mirror_h(const TensorF& img);

/// Translate by (dy, dx); vacated pixels take the nearest edge value, or
/// zero when `zero_fill` (used for flow channels).
TensorF shift2d(const TensorF& img, int dy, int dx, bool zero_fill);

/// Per-pixel median over the sequence, the static-background model used
/// for rough person localization.
TensorF median_background(const std::vector<TensorF>& frames);

/// Foreground-column centroid: x center of pixels deviating from the
/// background by more than `threshold`. Falls back to the frame midline
/// when nothing moves.
double locate_center_x(const TensorF& frame, const TensorF& background, float threshold);

/// Horizontal crop [x0, x0+w); caller clamps x0 into range.
TensorF crop_x(const TensorF& img, int x0, int w);

/// Replace invalid (zero) depth readings by the nearest valid value along
/// the same scanline. Rows with no valid pixel are left untouched.
TensorF fill_holes_scanline(const TensorF& img);

}  // namespace gait::img
