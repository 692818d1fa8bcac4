#pragma once

#include <string>
#include <vector>

#include "gait/io.hpp"
#include "gait/tensor.hpp"

/// Frame sequences -> fixed-size modality cuboids: windowing, person
/// x-centering, normalization and the 8-sample augmentation.
namespace gait::ingest {

struct PipelineConfig {
  int frame_size = 60;   // cuboid side N
  int window_len = 25;   // frames per cuboid L
  double overlap = 80.0; // window overlap percent O
  int resize_w = 80;     // pre-crop frame width (full height = frame_size)
  float fg_threshold = 20.0f;    // 8-bit foreground threshold for localization
  float flow_threshold = 0.5f;   // |u|+|v| threshold when localizing on flow
  std::string range_rule = "raw";   // "raw" keeps [0,255]; "unit" rescales to [0,1]
  std::string mean_mode = "volume"; // "volume" per-element mean, "scalar" global

  /// L*(1-O/100); throws unless it is a positive integer.
  int stride() const;
  void validate() const;
};

struct FrameSequence {
  std::string seq_id;
  int subject_id = -1;
  std::string scenario;
  std::string viewpoint;
  std::string split;
  std::vector<TensorF> frames;  // (H, W), or (2, H, W) for flow
};

struct Cuboid {
  std::string modality;  // gray | flow | depth
  std::string seq_id;
  int subject_id = -1;
  std::string split;
  int start = 0;  // window's first frame index
  TensorF data;   // (L, N, N) or (2L, N, N)
};

/// Window start indices 0, s, 2s, ... (count floor((T-L)/s)+1); empty when
/// the sequence is shorter than one window.
std::vector<int> window_starts(int frame_count, const PipelineConfig& cfg);

/// Per-frame subject center x against a per-pixel median background
/// (gray/depth) or the flow-magnitude field (flow).
std::vector<double> track_centers(const FrameSequence& seq, const PipelineConfig& cfg);

/// Crop every frame to frame_size columns, x-centered on the subject in
/// the anchor frame (default: the sequence's central frame) and clamped to
/// the image bounds. Height is kept as-is.
FrameSequence crop_and_align(const FrameSequence& seq, const std::vector<double>& centers,
                             const PipelineConfig& cfg, int anchor = -1);

/// All modality cuboids of one sequence. Frames wider than N are cropped
/// per window, centered on that window's middle frame. Sequences shorter
/// than L yield no cuboids.
std::vector<Cuboid> build_cuboids(const FrameSequence& seq, const PipelineConfig& cfg,
                                  const std::string& modality);

/// Gray/depth value scaling ahead of mean subtraction ("unit" divides by
/// 255); flow data is never rescaled.
Cuboid scaled(Cuboid c, const PipelineConfig& cfg);

struct ModalityMean {
  std::string modality;
  std::string source_split;  // provenance guard: must be "train"
  TensorF volume;
};

/// Mean over (already scaled) training cuboids; refuses any cuboid whose
/// split is not "train".
ModalityMean compute_mean(const std::vector<Cuboid>& cuboids, const PipelineConfig& cfg);

/// Subtracts the training mean. The cuboid must already be scaled.
Cuboid normalize(Cuboid c, const ModalityMean& mean);

/// Exactly 8 new cuboids: {as-is, mirrored} x 4 diagonal +-5 px shifts.
/// Mirroring flips x and negates the horizontal flow channels; shifts
/// replicate edges (gray/depth) or fill zeros (flow).
std::vector<Cuboid> augment(const Cuboid& c);

/// Loads one manifest entry's frames (*.pgm gray/depth, *.flo flow, sorted
/// by filename), fills depth holes and resizes to resize_w x frame_size.
/// When the sequence directory has a subdirectory named like the modality,
/// frames are read from there, so one manifest covers all modalities.
FrameSequence load_sequence(const io::SequenceEntry& entry, const std::string& base_dir,
                            const PipelineConfig& cfg, const std::string& modality);

}  // namespace gait::ingest
