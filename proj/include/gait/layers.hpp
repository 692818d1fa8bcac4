#pragma once

#include <string>
#include <vector>

#include "gait/tensor.hpp"

namespace gait {

enum class LayerKind {
  Input,
  Reshape,
  ChannelSelect,
  Conv2D,
  Conv3D,
  MaxPool2D,
  MaxPool3D,
  AvgPool2D,
  LRN,
  BatchNorm,
  FullyConnected,
  ReLU,
  Dropout,
  Softmax,
  Concat,
  Add,
};

const char* kind_name(LayerKind k);

/// One graph node's configuration. Only the fields relevant to `kind` are
/// read; geometry fields follow (t, h, w) order with t ignored by 2D ops.
struct LayerSpec {
  LayerKind kind = LayerKind::Input;
  std::string name;

  int filters = 0;  // Conv2D/Conv3D output channels
  int units = 0;    // FullyConnected width
  int kt = 1, kh = 1, kw = 1;
  int st = 1, sh = 1, sw = 1;
  int pt = 0, ph = 0, pw = 0;

  double rate = 0.0;  // Dropout

  int lrn_size = 5;
  double lrn_alpha = 1e-4, lrn_beta = 0.75, lrn_k = 2.0;

  double bn_momentum = 0.9, bn_eps = 1e-5;

  int sel_start = 0, sel_step = 1, sel_count = 0;  // ChannelSelect

  /// Input: declared per-sample dims. Reshape: per-sample target dims.
  Shape dims;
};

/// Field sanity only (no shapes): kernels/strides >= 1, rate in [0,1), ...
void validate_spec(const LayerSpec& s);

/// Per-sample output shape from per-sample input shapes (batch axis
/// excluded). Throws ConfigError when the layer cannot apply, so shape
/// inference over any graph is total.
Shape infer_shape(const LayerSpec& s, const std::vector<Shape>& in);

struct ParamDesc {
  std::string name;  // "<layer>.w", "<layer>.gamma", ...
  Shape shape;
  bool trainable;  // running stats are state, not optimized
  bool decay;      // weight decay applies to conv/FC weights only
};

std::vector<ParamDesc> param_descs(const LayerSpec& s, const std::vector<Shape>& in);

}  // namespace gait
