#pragma once

#include <string>
#include <vector>

#include "gait/graph.hpp"

/// Network builders. All nets consume fixed-size cuboids stored as
/// (channels, 60, 60) with channels = 25 (gray/depth: one frame per channel)
/// or 50 (optical flow: interleaved u1,v1,u2,v2,...).
namespace gait::zoo {

/// Modality tags as used across ingest, training and score files.
inline constexpr const char* kGray = "gray";
inline constexpr const char* kFlow = "flow";
inline constexpr const char* kDepth = "depth";

int modality_channels(const std::string& modality);  // 25 or 50

/// Scales a width by the curriculum multiplier, rounding up. A warning is
/// recorded on the graph when rounding changed the value.
int scaled_width(int units, double width, GraphDef& g);

/// Linear net: conv1(96,7x7,s1)+lrn+pool2 -> conv2(192,5x5,s2)+pool2 ->
/// conv3(512,3x3,s1)+pool2 -> conv4(4096,2x2,s1) -> full5(4096) ->
/// full6(2048, signature) -> softmax. ReLU after every conv/FC; dropout on
/// full5/full6. Input cuboid channels select the modality.
GraphDef build_2dcnn(int classes, double width, const std::string& modality,
                     double dropout_rate = 0.4);

/// Volumetric net. Optical flow splits into x-flow / y-flow branches (half
/// filters each: 48/96/256/2048), merged by concat before full5; gray and
/// depth run one branch with full filter counts (96/192/512/4096).
GraphDef build_3dcnn(int classes, double width, const std::string& modality,
                     double dropout_rate = 0.4);

/// conv1(16,3x3)+pool2 -> 3 stages x 5 two-conv residual blocks (16/32/64,
/// stride 2 entering stages 2 and 3) -> avgpool 8x8 -> softmax. Batch norm
/// after every conv; projection shortcut where width or stride changes.
/// Signature: the 64-wide average-pool output.
GraphDef build_resnet_a(int classes, const std::string& modality);

/// conv1(64,7x7)+maxpool3(s2) -> bottleneck stages (1x1,3x3,1x1) of 4/6/8/3
/// blocks, widths 64/128/256/256, stride 2 entering stages 2-4 -> avgpool
/// 2x2 s1 -> softmax. Signature: the 3x3x256 average-pool output.
GraphDef build_resnet_b(int classes, const std::string& modality);

enum class FusionHead {
  FC,       // full7(4096) + full8(2048) + full9(1024), ReLU+dropout each
  Softmax,  // dropout + softmax only (ResNet variant)
};

struct FusionSpec {
  /// One branch per modality: architecture id ("2dcnn", "3dcnn", "resnet-a",
  /// "resnet-b") and modality tag.
  struct Branch {
    std::string arch;
    std::string modality;
  };
  std::vector<Branch> branches;
  std::string position = "P5";  // P1..P5
  FusionHead head = FusionHead::FC;
  double width = 1.0;
  double dropout_rate = 0.4;
};

void validate(const FusionSpec& spec);

/// Branches are built, truncated at the fusion position, concatenated along
/// the channel/feature axis, and topped with the requested head.
GraphDef build_fusion_net(const FusionSpec& spec, int classes);

/// Dispatch by architecture id for single-modality nets.
GraphDef build(const std::string& arch, int classes, double width, const std::string& modality);

}  // namespace gait::zoo
