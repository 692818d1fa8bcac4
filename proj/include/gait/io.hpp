#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gait/tensor.hpp"

/// File formats: 8-bit binary graymaps for gray/depth frames, raw "FLO1"
/// files for flow fields, line-oriented manifests and score files, and the
/// checkpoint container. All writes are atomic (temp file + rename).
namespace gait::io {

bool file_exists(const std::string& path);
std::vector<std::uint8_t> read_bytes(const std::string& path);
void write_bytes_atomic(const std::string& path, const void* data, std::size_t size);
void write_text_atomic(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

/// 64-bit FNV-1a, the checksum used by the checkpoint container and the
/// config/report hashing.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

// -- frames -----------------------------------------------------------------

/// Binary 8-bit graymap ("P5", maxval <= 255) as an (H, W) tensor of raw
/// values in [0, 255].
TensorF read_pgm(const std::string& path);
void write_pgm(const std::string& path, const TensorF& img);

/// Raw flow file: magic "FLO1", two 32-bit little-endian dims (width,
/// height), then row-major little-endian float pairs (u, v). In memory the
/// field is (2, H, W) with channel 0 horizontal.
TensorF read_flo(const std::string& path);
void write_flo(const std::string& path, const TensorF& flow);

// -- manifest ---------------------------------------------------------------

struct SequenceEntry {
  std::string seq_id;
  int subject_id = -1;
  std::string scenario;   // e.g. N/B/S or nm/bg/cl
  std::string viewpoint;
  std::string dir;        // per-sequence frame directory, relative to manifest
  std::string split;      // train | val | test | test-gallery
};

bool valid_split(const std::string& split);

/// One sequence per line: `<seq_id> <subject_id> <scenario> <viewpoint>
/// <modality-dir> <split>`; '#' starts a comment.
std::vector<SequenceEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<SequenceEntry>& entries);

// -- score files ------------------------------------------------------------

struct ScoreLine {
  std::string video_id;
  std::string modality;
  std::vector<double> probs;
};

/// `<video_id> <modality> p_1 ... p_C` per line, full precision.
std::vector<ScoreLine> read_scores(const std::string& path);
void write_scores(const std::string& path, const std::vector<ScoreLine>& lines);

// -- checkpoints ------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named 32-bit blocks inside a "GAITCKPT" container: magic, format
/// version, config hash, block count, then per block the name (u32 length +
/// bytes), shape (u32 rank + u32 dims) and float32 payload; a trailing
/// 64-bit FNV-1a checksum covers everything before it.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  std::map<std::string, TensorF> blocks;  // ordered => deterministic bytes
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gait::io
