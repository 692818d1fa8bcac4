#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gait/io.hpp"
#include "gait/tensor.hpp"

/// Desk-scale synthetic walking corpus: articulated soft-blob walkers with a
/// gray rendering, a depth proxy and analytically exact optical flow, plus
/// manifests for the two evaluation protocols (held-out sequences of known
/// identities; disjoint identities for signature transfer).
namespace gait::cli {

struct SyntheticSpec {
  int subjects = 10;
  int sequences = 6;  // per subject; last two become val / test
  int frames = 40;
  int height = 75;  // raw frame size; the ingest stage resizes and crops
  int width = 100;
  std::uint64_t seed = 7;
  bool bag = false;   // extra test sequence per subject carrying a bag blob
  bool coat = false;  // extra test sequence with a widened body
  void validate() const;
};

/// Gait style of one identity, drawn deterministically from the corpus seed.
struct SubjectParams {
  double stride;     // horizontal speed, px/frame
  double period;     // frames per gait cycle
  double phase;      // gait cycle offset
  double leg_amp;    // leg swing amplitude, px
  double arm_amp;
  double body_rx, body_ry;  // torso radii
  double bounce;            // vertical bob amplitude
  double head_r;
  double base_gray;  // shading level
  double depth_base;
};

/// Stratified draws: each gait parameter spreads the subjects over disjoint
/// slots of its range (slot order itself shuffled per parameter), so any two
/// identities differ markedly in several cues at once.
SubjectParams subject_params(std::uint64_t seed, int subject, int subjects);

/// One rigid body part at one instant: a shaded soft ellipse.
struct Part {
  double cx, cy;
  double rx, ry;
  double gray;   // peak 8-bit intensity
  double depth;  // constant proxy value
};

/// The walker's parts at one frame. `bag`/`coat` enable the scenario
/// perturbations (attached blob / widened torso).
std::vector<Part> walker_parts(const SubjectParams& p, int frame, int height, int width,
                               bool bag, bool coat);

TensorF render_gray(const std::vector<Part>& parts, int height, int width);

/// Depth proxy with deterministic dropout holes for the hole-filling stage.
TensorF render_depth(const std::vector<Part>& parts, int height, int width, int frame);

/// Exact displacement field between two part lists (same part order):
/// each pixel moves with its topmost part; background stays at zero.
TensorF exact_flow(const std::vector<Part>& at_t, const std::vector<Part>& at_t1, int height,
                   int width);

struct GeneratedDataset {
  std::string root;
  std::vector<io::SequenceEntry> classify_entries;  // same-identity protocol
  std::vector<io::SequenceEntry> transfer_entries;  // disjoint-identity protocol
  std::string classify_manifest;                    // file paths under root
  std::string transfer_manifest;
};

/// Renders every sequence as gray/depth/flow subdirectories under
/// `<out_dir>/<seq_id>/` and writes both protocol manifests. Same spec and
/// seed produce bit-identical files.
GeneratedDataset generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

/// Order-independent content hash of a generated directory tree.
std::uint64_t tree_hash(const std::string& dir);

}  // namespace gait::cli
