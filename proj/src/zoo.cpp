#include "gait/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gait/errors.hpp"

namespace gait::zoo {

namespace {

constexpr int kFrameSide = 60;
constexpr int kWindowLen = 25;

LayerSpec conv2d_spec(const std::string& name, int filters, int k, int s, int p) {
  LayerSpec l;
  l.kind = LayerKind::Conv2D;
  l.name = name;
  l.filters = filters;
  l.kh = l.kw = k;
  l.sh = l.sw = s;
  l.ph = l.pw = p;
  return l;
}

LayerSpec conv3d_spec(const std::string& name, int filters, int k, int s, int p, int pt) {
  LayerSpec l;
  l.kind = LayerKind::Conv3D;
  l.name = name;
  l.filters = filters;
  l.kt = l.kh = l.kw = k;
  l.st = l.sh = l.sw = s;
  l.pt = pt;
  l.ph = l.pw = p;
  return l;
}

LayerSpec pool2d_spec(const std::string& name, int k, int s) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool2D;
  l.name = name;
  l.kh = l.kw = k;
  l.sh = l.sw = s;
  return l;
}

LayerSpec pool3d_spec(const std::string& name, int k, int s) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool3D;
  l.name = name;
  l.kt = l.kh = l.kw = k;
  l.st = l.sh = l.sw = s;
  return l;
}

LayerSpec avgpool_spec(const std::string& name, int k, int s) {
  LayerSpec l;
  l.kind = LayerKind::AvgPool2D;
  l.name = name;
  l.kh = l.kw = k;
  l.sh = l.sw = s;
  return l;
}

LayerSpec simple(LayerKind kind, const std::string& name) {
  LayerSpec l;
  l.kind = kind;
  l.name = name;
  return l;
}

LayerSpec fc_spec(const std::string& name, int units) {
  LayerSpec l;
  l.kind = LayerKind::FullyConnected;
  l.name = name;
  l.units = units;
  return l;
}

LayerSpec dropout_spec(const std::string& name, double rate) {
  LayerSpec l;
  l.kind = LayerKind::Dropout;
  l.name = name;
  l.rate = rate;
  return l;
}

LayerSpec input_spec(const std::string& name, Shape dims) {
  LayerSpec l;
  l.kind = LayerKind::Input;
  l.name = name;
  l.dims = std::move(dims);
  return l;
}

LayerSpec reshape_spec(const std::string& name, Shape dims) {
  LayerSpec l;
  l.kind = LayerKind::Reshape;
  l.name = name;
  l.dims = std::move(dims);
  return l;
}

LayerSpec select_spec(const std::string& name, int start, int step, int count) {
  LayerSpec l;
  l.kind = LayerKind::ChannelSelect;
  l.name = name;
  l.sel_start = start;
  l.sel_step = step;
  l.sel_count = count;
  return l;
}

void require_classes(int classes) {
  if (classes < 2) throw ConfigError("need at least 2 classes, got " + std::to_string(classes));
}

void require_width(double width) {
  if (!(width > 0.0 && width <= 1.0))
    throw ConfigError("width multiplier must be in (0,1], got " + std::to_string(width));
}

/// Flattens node `x` (per-sample shape `s`) when it is not already rank 1.
int flattened(GraphDef& g, const std::string& name, int x, const Shape& s) {
  if (s.size() == 1) return x;
  return g.add(reshape_spec(name, {static_cast<int>(shape_numel(s))}), {x});
}

/// Two-conv residual block; identity shortcut unless width or stride change.
int residual2_block(GraphDef& g, const std::string& name, int x, int cin, int cout, int stride) {
  int b = g.add(conv2d_spec(name + ".conv1", cout, 3, stride, 1), {x});
  b = g.add(simple(LayerKind::BatchNorm, name + ".bn1"), {b});
  b = g.add(simple(LayerKind::ReLU, name + ".relu1"), {b});
  b = g.add(conv2d_spec(name + ".conv2", cout, 3, 1, 1), {b});
  b = g.add(simple(LayerKind::BatchNorm, name + ".bn2"), {b});
  int sc = x;
  if (cin != cout || stride != 1) {
    sc = g.add(conv2d_spec(name + ".proj", cout, 1, stride, 0), {x});
    sc = g.add(simple(LayerKind::BatchNorm, name + ".projbn"), {sc});
  }
  const int sum = g.add(simple(LayerKind::Add, name + ".add"), {b, sc});
  return g.add(simple(LayerKind::ReLU, name + ".relu2"), {sum});
}

/// Bottleneck residual block: 1x1, 3x3 (carries the stride), 1x1, all of
/// width n with no expansion.
int bottleneck_block(GraphDef& g, const std::string& name, int x, int cin, int n, int stride) {
  int b = g.add(conv2d_spec(name + ".conv1", n, 1, 1, 0), {x});
  b = g.add(simple(LayerKind::BatchNorm, name + ".bn1"), {b});
  b = g.add(simple(LayerKind::ReLU, name + ".relu1"), {b});
  b = g.add(conv2d_spec(name + ".conv2", n, 3, stride, 1), {b});
  b = g.add(simple(LayerKind::BatchNorm, name + ".bn2"), {b});
  b = g.add(simple(LayerKind::ReLU, name + ".relu2"), {b});
  b = g.add(conv2d_spec(name + ".conv3", n, 1, 1, 0), {b});
  b = g.add(simple(LayerKind::BatchNorm, name + ".bn3"), {b});
  int sc = x;
  if (cin != n || stride != 1) {
    sc = g.add(conv2d_spec(name + ".proj", n, 1, stride, 0), {x});
    sc = g.add(simple(LayerKind::BatchNorm, name + ".projbn"), {sc});
  }
  const int sum = g.add(simple(LayerKind::Add, name + ".add"), {b, sc});
  return g.add(simple(LayerKind::ReLU, name + ".relu3"), {sum});
}

/// One stage of the volumetric net on node `in`. Stages 1-3 are
/// conv+relu+pool; stage 4 is conv+relu with temporal pad 1 because the
/// extent shrank to a single step by then. Returns {chain output, tap},
/// the tap being the post-ReLU conv activation ahead of any pooling.
std::pair<int, int> volum_stage(GraphDef& g, const std::string& prefix, int stage, int in,
                                int filters) {
  const std::string n = prefix + "conv" + std::to_string(stage);
  int id;
  switch (stage) {
    case 1:
      id = g.add(conv3d_spec(n, filters, 3, 1, 1, 1), {in});
      break;
    case 2:
      id = g.add(conv3d_spec(n, filters, 3, 2, 1, 1), {in});
      break;
    case 3:
      id = g.add(conv3d_spec(n, filters, 3, 1, 1, 1), {in});
      break;
    default:
      id = g.add(conv3d_spec(n, filters, 2, 1, 0, 1), {in});
      break;
  }
  id = g.add(simple(LayerKind::ReLU, prefix + "relu" + std::to_string(stage)), {id});
  const int tap = id;
  if (stage < 4)
    id = g.add(pool3d_spec(prefix + "pool" + std::to_string(stage), 2, 2), {id});
  return {id, tap};
}

/// Shared FC tail: full5 -> full6 -> classifier. Returns the softmax node
/// and records logits/signature/taps on the graph.
void fc_tail(GraphDef& g, int x, const Shape& xshape, int full5_units, int full6_units,
             int classes, double rate) {
  int id = flattened(g, "flatten", x, xshape);
  id = g.add(fc_spec("full5", full5_units), {id});
  id = g.add(simple(LayerKind::ReLU, "relu5"), {id});
  id = g.add(dropout_spec("drop5", rate), {id});
  id = g.add(fc_spec("full6", full6_units), {id});
  const int sig = g.add(simple(LayerKind::ReLU, "relu6"), {id});
  id = g.add(dropout_spec("drop6", rate), {sig});
  const int logits = g.add(fc_spec("out", classes), {id});
  const int scores = g.add(simple(LayerKind::Softmax, "scores"), {logits});
  g.logits_node = logits;
  g.output_node = scores;
  g.signature_node = sig;
  g.taps["P5"] = {sig};
}

}  // namespace

int modality_channels(const std::string& modality) {
  if (modality == kGray || modality == kDepth) return kWindowLen;
  if (modality == kFlow) return 2 * kWindowLen;
  throw ConfigError("unknown modality '" + modality + "'");
}

int scaled_width(int units, double width, GraphDef& g) {
  const double exact = units * width;
  const int up = static_cast<int>(std::ceil(exact - 1e-9));
  if (std::abs(up - exact) > 1e-9)
    g.warnings.push_back("width " + std::to_string(width) + " of " + std::to_string(units) +
                         " is fractional; rounded up to " + std::to_string(up));
  return std::max(1, up);
}

GraphDef build_2dcnn(int classes, double width, const std::string& modality,
                     double dropout_rate) {
  require_classes(classes);
  require_width(width);
  GraphDef g;
  g.arch_id = "2dcnn";
  g.classes = classes;
  g.modality = modality;
  g.width = width;
  const int c = modality_channels(modality);

  // taps P1..P4 sit on the (post-ReLU) conv outputs, before pooling
  int id = g.add(input_spec("in", {c, kFrameSide, kFrameSide}), {});
  id = g.add(conv2d_spec("conv1", scaled_width(96, width, g), 7, 1, 3), {id});
  id = g.add(simple(LayerKind::ReLU, "relu1"), {id});
  g.taps["P1"] = {id};
  id = g.add(simple(LayerKind::LRN, "norm1"), {id});
  id = g.add(pool2d_spec("pool1", 2, 2), {id});
  id = g.add(conv2d_spec("conv2", scaled_width(192, width, g), 5, 2, 2), {id});
  id = g.add(simple(LayerKind::ReLU, "relu2"), {id});
  g.taps["P2"] = {id};
  id = g.add(pool2d_spec("pool2", 2, 2), {id});
  id = g.add(conv2d_spec("conv3", scaled_width(512, width, g), 3, 1, 1), {id});
  id = g.add(simple(LayerKind::ReLU, "relu3"), {id});
  g.taps["P3"] = {id};
  id = g.add(pool2d_spec("pool3", 2, 2), {id});
  const int conv4_f = scaled_width(4096, width, g);
  id = g.add(conv2d_spec("conv4", conv4_f, 2, 1, 0), {id});
  id = g.add(simple(LayerKind::ReLU, "relu4"), {id});
  g.taps["P4"] = {id};

  fc_tail(g, id, {conv4_f, 2, 2}, scaled_width(4096, width, g), scaled_width(2048, width, g),
          classes, dropout_rate);
  g.check();
  return g;
}

GraphDef build_3dcnn(int classes, double width, const std::string& modality,
                     double dropout_rate) {
  require_classes(classes);
  require_width(width);
  GraphDef g;
  g.arch_id = "3dcnn";
  g.classes = classes;
  g.modality = modality;
  g.width = width;

  int merged = -1;
  int concat_c = 0;
  if (modality == kFlow) {
    const int in = g.add(input_spec("in", {50, kFrameSide, kFrameSide}), {});
    const int filters[4] = {scaled_width(48, width, g), scaled_width(96, width, g),
                            scaled_width(256, width, g), scaled_width(2048, width, g)};
    // interleaved storage: even channels are horizontal (u), odd vertical (v)
    int xb = g.add(select_spec("xflow.split", 0, 2, kWindowLen), {in});
    xb = g.add(reshape_spec("xflow.volume", {1, kWindowLen, kFrameSide, kFrameSide}), {xb});
    int yb = g.add(select_spec("yflow.split", 1, 2, kWindowLen), {in});
    yb = g.add(reshape_spec("yflow.volume", {1, kWindowLen, kFrameSide, kFrameSide}), {yb});
    // stages interleave so a graph prefix at any tap spans both branches
    for (int stage = 1; stage <= 4; ++stage) {
      const auto [xo, xt] = volum_stage(g, "xflow.", stage, xb, filters[stage - 1]);
      const auto [yo, yt] = volum_stage(g, "yflow.", stage, yb, filters[stage - 1]);
      xb = xo;
      yb = yo;
      g.taps["P" + std::to_string(stage)] = {xt, yt};
    }
    merged = g.add(simple(LayerKind::Concat, "merge"), {xb, yb});
    concat_c = 2 * filters[3];
  } else {
    const int c = modality_channels(modality);
    int id = g.add(input_spec("in", {c, kFrameSide, kFrameSide}), {});
    id = g.add(reshape_spec("volume", {1, c, kFrameSide, kFrameSide}), {id});
    const int filters[4] = {scaled_width(96, width, g), scaled_width(192, width, g),
                            scaled_width(512, width, g), scaled_width(4096, width, g)};
    for (int stage = 1; stage <= 4; ++stage) {
      const auto [out, tap] = volum_stage(g, "", stage, id, filters[stage - 1]);
      id = out;
      g.taps["P" + std::to_string(stage)] = {tap};
    }
    merged = id;
    concat_c = filters[3];
  }

  fc_tail(g, merged, {concat_c, 2, 2, 2}, scaled_width(4096, width, g),
          scaled_width(2048, width, g), classes, dropout_rate);
  g.check();
  return g;
}

GraphDef build_resnet_a(int classes, const std::string& modality) {
  require_classes(classes);
  GraphDef g;
  g.arch_id = "resnet-a";
  g.classes = classes;
  g.modality = modality;
  const int c = modality_channels(modality);

  int id = g.add(input_spec("in", {c, kFrameSide, kFrameSide}), {});
  id = g.add(conv2d_spec("conv1", 16, 3, 1, 1), {id});
  id = g.add(simple(LayerKind::BatchNorm, "conv1.bn"), {id});
  id = g.add(simple(LayerKind::ReLU, "conv1.relu"), {id});
  id = g.add(pool2d_spec("pool1", 2, 2), {id});

  const int stage_width[3] = {16, 32, 64};
  int cin = 16;
  for (int s = 0; s < 3; ++s) {
    for (int b = 0; b < 5; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string name = "s" + std::to_string(s + 1) + "b" + std::to_string(b + 1);
      id = residual2_block(g, name, id, cin, stage_width[s], stride);
      cin = stage_width[s];
    }
    g.taps["P" + std::to_string(s + 1)] = {id};
  }
  g.taps["P4"] = {id};  // three stages only: P4 aliases the final stage output
  g.warnings.push_back("P4 aliases stage 3 (this net has three residual stages)");

  id = g.add(avgpool_spec("avgpool", 8, 1), {id});
  g.signature_node = id;
  g.taps["P5"] = {id};
  id = g.add(reshape_spec("flatten", {64}), {id});
  const int logits = g.add(fc_spec("out", classes), {id});
  g.logits_node = logits;
  g.output_node = g.add(simple(LayerKind::Softmax, "scores"), {logits});
  g.check();
  return g;
}

GraphDef build_resnet_b(int classes, const std::string& modality) {
  require_classes(classes);
  GraphDef g;
  g.arch_id = "resnet-b";
  g.classes = classes;
  g.modality = modality;
  const int c = modality_channels(modality);

  int id = g.add(input_spec("in", {c, kFrameSide, kFrameSide}), {});
  id = g.add(conv2d_spec("conv1", 64, 7, 1, 3), {id});
  id = g.add(simple(LayerKind::BatchNorm, "conv1.bn"), {id});
  id = g.add(simple(LayerKind::ReLU, "conv1.relu"), {id});
  id = g.add(pool2d_spec("pool1", 3, 2), {id});

  const int stage_width[4] = {64, 128, 256, 256};
  const int stage_blocks[4] = {4, 6, 8, 3};
  int cin = 64;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < stage_blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string name = "s" + std::to_string(s + 1) + "b" + std::to_string(b + 1);
      id = bottleneck_block(g, name, id, cin, stage_width[s], stride);
      cin = stage_width[s];
    }
    g.taps["P" + std::to_string(s + 1)] = {id};
  }

  id = g.add(avgpool_spec("avgpool", 2, 1), {id});
  g.signature_node = id;
  g.taps["P5"] = {id};
  id = g.add(reshape_spec("flatten", {3 * 3 * 256}), {id});
  const int logits = g.add(fc_spec("out", classes), {id});
  g.logits_node = logits;
  g.output_node = g.add(simple(LayerKind::Softmax, "scores"), {logits});
  g.check();
  return g;
}

void validate(const FusionSpec& spec) {
  if (spec.branches.empty()) throw ConfigError("fusion needs at least one branch");
  if (spec.position.size() != 2 || spec.position[0] != 'P' || spec.position[1] < '1' ||
      spec.position[1] > '5')
    throw ConfigError("fusion position must be P1..P5, got '" + spec.position + "'");
  std::set<std::string> seen;
  for (const auto& b : spec.branches) {
    if (!seen.insert(b.modality).second)
      throw ConfigError("duplicate fusion branch modality '" + b.modality + "'");
    modality_channels(b.modality);
  }
  const bool resnet_head = spec.head == FusionHead::Softmax;
  for (const auto& b : spec.branches) {
    const bool is_resnet = b.arch == "resnet-a" || b.arch == "resnet-b";
    if (resnet_head && !is_resnet)
      throw ConfigError("softmax fusion head applies to residual-net branches only");
  }
}

GraphDef build_fusion_net(const FusionSpec& spec, int classes) {
  require_classes(classes);
  validate(spec);

  GraphDef g;
  g.arch_id = "fusion-" + spec.position;
  g.classes = classes;
  g.width = spec.width;
  std::vector<int> tap_nodes;
  std::vector<Shape> tap_shapes;

  for (const auto& br : spec.branches) {
    GraphDef base = build(br.arch, classes, spec.width, br.modality);
    const auto it = base.taps.find(spec.position);
    if (it == base.taps.end())
      throw ConfigError("branch '" + br.arch + "' has no tap " + spec.position);
    const std::vector<int>& taps = it->second;
    const int last = *std::max_element(taps.begin(), taps.end());
    const auto shapes = infer_shapes(base);
    const int offset = static_cast<int>(g.nodes.size());
    // the branch builders order nodes so every tap's ancestry lies in [0, last]
    for (int i = 0; i <= last; ++i) {
      Node n = base.nodes[static_cast<std::size_t>(i)];
      n.spec.name = br.modality + "." + n.spec.name;
      for (int& in : n.inputs) in += offset;
      g.add(std::move(n.spec), std::move(n.inputs));
    }
    for (const auto& w : base.warnings) g.warnings.push_back(br.modality + ": " + w);
    g.modality += (g.modality.empty() ? "" : "+") + br.modality;
    for (const int tap : taps) {
      tap_nodes.push_back(offset + tap);
      tap_shapes.push_back(shapes[static_cast<std::size_t>(tap)]);
    }
  }

  for (std::size_t i = 1; i < tap_shapes.size(); ++i) {
    if (tap_shapes[i].size() != tap_shapes[0].size())
      throw ConfigError("fusion branches disagree on activation rank at " + spec.position);
    for (std::size_t d = 1; d < tap_shapes[0].size(); ++d)
      if (tap_shapes[i][d] != tap_shapes[0][d])
        throw ConfigError("fusion branches disagree on activation shape at " + spec.position +
                          ": " + shape_str(tap_shapes[i]) + " vs " + shape_str(tap_shapes[0]));
  }

  int id = g.add(simple(LayerKind::Concat, "fuse"), tap_nodes);
  g.taps["fused"] = {id};
  Shape fused = tap_shapes[0];
  for (std::size_t i = 1; i < tap_shapes.size(); ++i) fused[0] += tap_shapes[i][0];

  if (spec.head == FusionHead::FC) {
    id = flattened(g, "flatten", id, fused);
    id = g.add(fc_spec("full7", 4096), {id});
    id = g.add(simple(LayerKind::ReLU, "relu7"), {id});
    id = g.add(dropout_spec("drop7", spec.dropout_rate), {id});
    id = g.add(fc_spec("full8", 2048), {id});
    id = g.add(simple(LayerKind::ReLU, "relu8"), {id});
    id = g.add(dropout_spec("drop8", spec.dropout_rate), {id});
    id = g.add(fc_spec("full9", 1024), {id});
    const int sig = g.add(simple(LayerKind::ReLU, "relu9"), {id});
    id = g.add(dropout_spec("drop9", spec.dropout_rate), {sig});
    g.signature_node = sig;
  } else {
    id = flattened(g, "flatten", id, fused);
    g.signature_node = id;
    id = g.add(dropout_spec("drop", spec.dropout_rate), {id});
  }
  const int logits = g.add(fc_spec("out", classes), {id});
  g.logits_node = logits;
  g.output_node = g.add(simple(LayerKind::Softmax, "scores"), {logits});
  g.check();
  return g;
}

GraphDef build(const std::string& arch, int classes, double width, const std::string& modality) {
  if (arch == "2dcnn") return build_2dcnn(classes, width, modality);
  if (arch == "3dcnn") return build_3dcnn(classes, width, modality);
  if (arch == "resnet-a" || arch == "resnet-b") {
    if (width != 1.0)
      throw ConfigError("residual nets train at full width only (no curriculum)");
    return arch == "resnet-a" ? build_resnet_a(classes, modality)
                              : build_resnet_b(classes, modality);
  }
  throw ConfigError("unknown architecture '" + arch + "'");
}

}  // namespace gait::zoo
