#pragma once

#include "gait/tensor.hpp"

/// Dense optical flow between frame pairs: classical iterative estimation
/// (quadratic smoothness prior) run coarse-to-fine over an image pyramid.
/// Precomputed flow files can be ingested instead; see gait::io::read_flo.
namespace gait::flow {

struct Params {
  int levels = 3;        // pyramid depth (level 0 = full resolution)
  int iterations = 100;  // relaxation sweeps per level
  double alpha2 = 0.5;   // smoothness weight for unit-range intensities
};

/// Per-pixel (u, v) displacement from `prev` to `next` as a (2, H, W)
/// tensor, channel 0 horizontal. Frames with values above ~2 are treated
/// as 8-bit and rescaled to unit range first; the field itself is returned
/// unfiltered, in pixels.
TensorF estimate(const TensorF& prev, const TensorF& next, const Params& p = {});

}  // namespace gait::flow
