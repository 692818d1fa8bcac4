#include "gait/layers.hpp"

#include "gait/errors.hpp"
#include "gait/ops.hpp"

namespace gait {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Input: return "input";
    case LayerKind::Reshape: return "reshape";
    case LayerKind::ChannelSelect: return "channel-select";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::Conv3D: return "conv3d";
    case LayerKind::MaxPool2D: return "maxpool2d";
    case LayerKind::MaxPool3D: return "maxpool3d";
    case LayerKind::AvgPool2D: return "avgpool2d";
    case LayerKind::LRN: return "lrn";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::Concat: return "concat";
    case LayerKind::Add: return "add";
  }
  return "?";
}

namespace {

[[noreturn]] void fail(const LayerSpec& s, const std::string& what) {
  throw ConfigError("layer '" + s.name + "' (" + kind_name(s.kind) + "): " + what);
}

void need_rank(const LayerSpec& s, const Shape& in, int rank) {
  if (static_cast<int>(in.size()) != rank)
    fail(s, "expected input rank " + std::to_string(rank) + ", got " + shape_str(in));
}

}  // namespace

void validate_spec(const LayerSpec& s) {
  if (s.name.empty()) throw ConfigError("unnamed layer");
  if (s.kt < 1 || s.kh < 1 || s.kw < 1) fail(s, "kernel sizes must be >= 1");
  if (s.st < 1 || s.sh < 1 || s.sw < 1) fail(s, "strides must be >= 1");
  if (s.pt < 0 || s.ph < 0 || s.pw < 0) fail(s, "padding must be >= 0");
  if (s.rate < 0.0 || s.rate >= 1.0) fail(s, "dropout rate must be in [0,1)");
  switch (s.kind) {
    case LayerKind::Conv2D:
    case LayerKind::Conv3D:
      if (s.filters < 1) fail(s, "filter count must be >= 1");
      break;
    case LayerKind::FullyConnected:
      if (s.units < 1) fail(s, "unit count must be >= 1");
      break;
    case LayerKind::LRN:
      if (s.lrn_size < 1 || s.lrn_size % 2 == 0) fail(s, "window must be odd and >= 1");
      break;
    case LayerKind::ChannelSelect:
      if (s.sel_start < 0 || s.sel_step < 1 || s.sel_count < 1) fail(s, "bad channel selection");
      break;
    case LayerKind::Input:
    case LayerKind::Reshape:
      if (s.dims.empty()) fail(s, "missing dims");
      for (int d : s.dims)
        if (d < 1) fail(s, "dims must be positive, got " + shape_str(s.dims));
      break;
    default:
      break;
  }
}

Shape infer_shape(const LayerSpec& s, const std::vector<Shape>& in) {
  validate_spec(s);
  const auto arity_one = [&]() -> const Shape& {
    if (in.size() != 1) fail(s, "expects exactly one input");
    return in[0];
  };
  switch (s.kind) {
    case LayerKind::Input:
      if (!in.empty()) fail(s, "input layers take no inputs");
      return s.dims;
    case LayerKind::Reshape: {
      const Shape& x = arity_one();
      if (shape_numel(x) != shape_numel(s.dims))
        fail(s, "cannot reshape " + shape_str(x) + " to " + shape_str(s.dims));
      return s.dims;
    }
    case LayerKind::ChannelSelect: {
      const Shape& x = arity_one();
      if (x.empty()) fail(s, "needs a channel axis");
      if (s.sel_start + (s.sel_count - 1) * s.sel_step >= x[0])
        fail(s, "selection exceeds " + std::to_string(x[0]) + " channels");
      Shape out = x;
      out[0] = s.sel_count;
      return out;
    }
    case LayerKind::Conv2D: {
      const Shape& x = arity_one();
      need_rank(s, x, 3);
      return {s.filters, ops::conv_out_dim(x[1], s.kh, s.sh, s.ph),
              ops::conv_out_dim(x[2], s.kw, s.sw, s.pw)};
    }
    case LayerKind::Conv3D: {
      const Shape& x = arity_one();
      need_rank(s, x, 4);
      return {s.filters, ops::conv_out_dim(x[1], s.kt, s.st, s.pt),
              ops::conv_out_dim(x[2], s.kh, s.sh, s.ph),
              ops::conv_out_dim(x[3], s.kw, s.sw, s.pw)};
    }
    case LayerKind::MaxPool2D:
    case LayerKind::AvgPool2D: {
      const Shape& x = arity_one();
      need_rank(s, x, 3);
      return {x[0], ops::pool_out_dim(x[1], s.kh, s.sh), ops::pool_out_dim(x[2], s.kw, s.sw)};
    }
    case LayerKind::MaxPool3D: {
      const Shape& x = arity_one();
      need_rank(s, x, 4);
      return {x[0], ops::pool_out_dim(x[1], s.kt, s.st), ops::pool_out_dim(x[2], s.kh, s.sh),
              ops::pool_out_dim(x[3], s.kw, s.sw)};
    }
    case LayerKind::LRN: {
      const Shape& x = arity_one();
      need_rank(s, x, 3);
      return x;
    }
    case LayerKind::BatchNorm: {
      const Shape& x = arity_one();
      if (x.empty()) fail(s, "needs a channel axis");
      return x;
    }
    case LayerKind::FullyConnected: {
      const Shape& x = arity_one();
      need_rank(s, x, 1);
      return {s.units};
    }
    case LayerKind::ReLU:
    case LayerKind::Dropout:
      return arity_one();
    case LayerKind::Softmax: {
      const Shape& x = arity_one();
      need_rank(s, x, 1);
      if (x[0] < 1) fail(s, "empty score vector");
      return x;
    }
    case LayerKind::Concat: {
      if (in.empty()) fail(s, "expects at least one input");
      Shape out = in[0];
      if (out.empty()) fail(s, "needs a channel axis");
      for (std::size_t i = 1; i < in.size(); ++i) {
        if (in[i].size() != out.size()) fail(s, "input rank mismatch");
        for (std::size_t d = 1; d < out.size(); ++d)
          if (in[i][d] != out[d])
            fail(s, "dimension mismatch: " + shape_str(in[i]) + " vs " + shape_str(in[0]));
        out[0] += in[i][0];
      }
      return out;
    }
    case LayerKind::Add: {
      if (in.size() != 2) fail(s, "expects exactly two inputs");
      if (in[0] != in[1])
        fail(s, "shape mismatch: " + shape_str(in[0]) + " vs " + shape_str(in[1]));
      return in[0];
    }
  }
  fail(s, "unhandled kind");
}

std::vector<ParamDesc> param_descs(const LayerSpec& s, const std::vector<Shape>& in) {
  switch (s.kind) {
    case LayerKind::Conv2D: {
      const int cin = in.at(0).at(0);
      return {{s.name + ".w", {s.kh, s.kw, cin, s.filters}, true, true},
              {s.name + ".b", {s.filters}, true, false}};
    }
    case LayerKind::Conv3D: {
      const int cin = in.at(0).at(0);
      return {{s.name + ".w", {s.kt, s.kh, s.kw, cin, s.filters}, true, true},
              {s.name + ".b", {s.filters}, true, false}};
    }
    case LayerKind::FullyConnected: {
      const int d = in.at(0).at(0);
      return {{s.name + ".w", {d, s.units}, true, true},
              {s.name + ".b", {s.units}, true, false}};
    }
    case LayerKind::BatchNorm: {
      const int c = in.at(0).at(0);
      return {{s.name + ".gamma", {c}, true, false},
              {s.name + ".beta", {c}, true, false},
              {s.name + ".run_mean", {c}, false, false},
              {s.name + ".run_var", {c}, false, false}};
    }
    default:
      return {};
  }
}

}  // namespace gait
