#include "gait/ingest.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "gait/errors.hpp"
#include "gait/image.hpp"

namespace gait::ingest {

int PipelineConfig::stride() const {
  const double s = window_len * (1.0 - overlap / 100.0);
  const double r = std::round(s);
  if (!(r >= 1.0) || std::abs(s - r) > 1e-9)
    throw ConfigError("window stride " + std::to_string(s) + " is not a positive integer");
  return static_cast<int>(r);
}

void PipelineConfig::validate() const {
  if (frame_size < 1) throw ConfigError("frame_size must be positive");
  if (window_len < 1) throw ConfigError("window_len must be positive");
  if (overlap < 0.0 || overlap >= 100.0) throw ConfigError("overlap must be in [0, 100)");
  if (resize_w < frame_size) throw ConfigError("resize_w must be at least frame_size");
  if (range_rule != "raw" && range_rule != "unit")
    throw ConfigError("unknown range_rule '" + range_rule + "'");
  if (mean_mode != "volume" && mean_mode != "scalar")
    throw ConfigError("unknown mean_mode '" + mean_mode + "'");
  stride();
}

std::vector<int> window_starts(int frame_count, const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<int> starts;
  if (frame_count < cfg.window_len) return starts;
  const int s = cfg.stride();
  for (int a = 0; a + cfg.window_len <= frame_count; a += s) starts.push_back(a);
  return starts;
}

namespace {

bool is_flow_frame(const TensorF& f) { return f.rank() == 3; }

void check_frame(const TensorF& f) {
  if (f.rank() == 2) return;
  if (f.rank() == 3 && f.dim(0) == 2) return;
  throw ConfigError("frames must be (H,W) or (2,H,W), got " + shape_str(f.shape()));
}

// Scalar field the localizer thresholds: intensity as-is, |u|+|v| for flow.
TensorF detection_image(const TensorF& f) {
  if (!is_flow_frame(f)) return f;
  const int h = f.dim(1), w = f.dim(2);
  TensorF mag({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      mag[y * w + x] = std::abs(f.at(0, y, x)) + std::abs(f.at(1, y, x));
  return mag;
}

TensorF crop_frame_x(const TensorF& f, int x0, int w) {
  if (!is_flow_frame(f)) return img::crop_x(f, x0, w);
  TensorF out({2, f.dim(1), w});
  for (int c = 0; c < 2; ++c) {
    const TensorF plane = img::crop_x(TensorF({f.dim(1), f.dim(2)},
                                              std::vector<float>(f.data() + c * f.dim(1) * f.dim(2),
                                                                 f.data() + (c + 1) * f.dim(1) * f.dim(2))),
                                      x0, w);
    std::copy(plane.data(), plane.data() + plane.numel(), out.data() + c * plane.numel());
  }
  return out;
}

int clamp_x0(double cx, int frame_w, int n) {
  const int x0 = static_cast<int>(std::lround(cx)) - n / 2;
  return std::clamp(x0, 0, frame_w - n);
}

int frame_width(const TensorF& f) { return f.dim(f.rank() - 1); }
int frame_height(const TensorF& f) { return f.dim(f.rank() - 2); }

}  // namespace

std::vector<double> track_centers(const FrameSequence& seq, const PipelineConfig& cfg) {
  if (seq.frames.empty()) return {};
  std::vector<TensorF> det;
  det.reserve(seq.frames.size());
  for (const TensorF& f : seq.frames) {
    check_frame(f);
    det.push_back(detection_image(f));
  }
  const bool flow = is_flow_frame(seq.frames.front());
  const float threshold = flow ? cfg.flow_threshold : cfg.fg_threshold;
  // A moving subject's flow magnitude stands out against a zero background,
  // so the all-zero reference is used directly instead of a median stack.
  const TensorF bg = flow ? TensorF(det.front().shape(), 0.0f) : img::median_background(det);
  std::vector<double> centers;
  centers.reserve(det.size());
  for (const TensorF& d : det) centers.push_back(img::locate_center_x(d, bg, threshold));
  return centers;
}

FrameSequence crop_and_align(const FrameSequence& seq, const std::vector<double>& centers,
                             const PipelineConfig& cfg, int anchor) {
  if (seq.frames.empty()) throw ConfigError("cannot crop an empty sequence");
  if (centers.size() != seq.frames.size())
    throw ConfigError("track length does not match the frame count");
  if (anchor < 0) anchor = static_cast<int>(seq.frames.size() - 1) / 2;
  if (anchor >= static_cast<int>(seq.frames.size()))
    throw ConfigError("anchor frame is out of range");
  const int n = cfg.frame_size;
  const int x0 = clamp_x0(centers[anchor], frame_width(seq.frames.front()), n);
  FrameSequence out = seq;
  out.frames.clear();
  out.frames.reserve(seq.frames.size());
  for (const TensorF& f : seq.frames) out.frames.push_back(crop_frame_x(f, x0, n));
  return out;
}

std::vector<Cuboid> build_cuboids(const FrameSequence& seq, const PipelineConfig& cfg,
                                  const std::string& modality) {
  cfg.validate();
  if (modality != "gray" && modality != "depth" && modality != "flow")
    throw ConfigError("unknown modality '" + modality + "'");
  const bool flow = modality == "flow";
  const int n = cfg.frame_size, l = cfg.window_len;
  for (const TensorF& f : seq.frames) {
    check_frame(f);
    if (is_flow_frame(f) != flow)
      throw ConfigError("frame rank does not match modality '" + modality + "'");
    if (frame_height(f) != n || frame_width(f) < n)
      throw ConfigError("expected frames of height " + std::to_string(n) +
                        " and width >= " + std::to_string(n) + ", got " + shape_str(f.shape()));
  }
  const std::vector<int> starts = window_starts(static_cast<int>(seq.frames.size()), cfg);
  std::vector<double> centers;
  if (!seq.frames.empty() && frame_width(seq.frames.front()) > n)
    centers = track_centers(seq, cfg);

  std::vector<Cuboid> out;
  out.reserve(starts.size());
  for (int a : starts) {
    const int anchor = a + (l - 1) / 2;  // window's central frame carries the crop
    const int x0 = centers.empty()
                       ? 0
                       : clamp_x0(centers[anchor], frame_width(seq.frames.front()), n);
    Cuboid c;
    c.modality = modality;
    c.seq_id = seq.seq_id;
    c.subject_id = seq.subject_id;
    c.split = seq.split;
    c.start = a;
    c.data = TensorF(flow ? Shape{2 * l, n, n} : Shape{l, n, n});
    const int plane = n * n;
    for (int k = 0; k < l; ++k) {
      const TensorF f = crop_frame_x(seq.frames[a + k], x0, n);
      if (flow) {
        // Channels interleave as u_1, v_1, u_2, v_2, ...
        std::copy(f.data(), f.data() + plane, c.data.data() + (2 * k) * plane);
        std::copy(f.data() + plane, f.data() + 2 * plane, c.data.data() + (2 * k + 1) * plane);
      } else {
        std::copy(f.data(), f.data() + plane, c.data.data() + k * plane);
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

Cuboid scaled(Cuboid c, const PipelineConfig& cfg) {
  cfg.validate();
  if (c.modality != "flow" && cfg.range_rule == "unit")
    for (std::int64_t i = 0; i < c.data.numel(); ++i) c.data[i] /= 255.0f;
  return c;
}

ModalityMean compute_mean(const std::vector<Cuboid>& cuboids, const PipelineConfig& cfg) {
  cfg.validate();
  if (cuboids.empty()) throw ConfigError("cannot compute a mean over zero cuboids");
  const Shape shape = cuboids.front().data.shape();
  const std::string modality = cuboids.front().modality;
  TensorD acc(shape, 0.0);
  for (const Cuboid& c : cuboids) {
    if (c.split != "train")
      throw ConfigError("mean statistics must come from the train split; got a '" + c.split +
                        "' cuboid (" + c.seq_id + ")");
    if (c.modality != modality) throw ConfigError("mixed modalities in mean computation");
    if (c.data.shape() != shape) throw ConfigError("mixed cuboid shapes in mean computation");
    for (std::int64_t i = 0; i < acc.numel(); ++i) acc[i] += c.data[i];
  }
  for (std::int64_t i = 0; i < acc.numel(); ++i) acc[i] /= static_cast<double>(cuboids.size());
  if (cfg.mean_mode == "scalar") acc.fill(acc.mean());
  ModalityMean m;
  m.modality = modality;
  m.source_split = "train";
  m.volume = acc.cast<float>();
  return m;
}

Cuboid normalize(Cuboid c, const ModalityMean& mean) {
  if (mean.source_split != "train") throw ConfigError("mean statistics must come from the train split");
  if (c.modality != mean.modality)
    throw ConfigError("mean modality '" + mean.modality + "' does not match cuboid '" + c.modality + "'");
  if (c.data.shape() != mean.volume.shape())
    throw ConfigError("mean shape " + shape_str(mean.volume.shape()) + " does not match cuboid " +
                      shape_str(c.data.shape()));
  for (std::int64_t i = 0; i < c.data.numel(); ++i) c.data[i] -= mean.volume[i];
  return c;
}

namespace {

TensorF channel_of(const TensorF& cub, int c) {
  const int h = cub.dim(1), w = cub.dim(2);
  return TensorF({h, w}, std::vector<float>(cub.data() + c * h * w, cub.data() + (c + 1) * h * w));
}

Cuboid transformed(const Cuboid& in, bool mirror, int dy, int dx) {
  const bool flow = in.modality == "flow";
  Cuboid out = in;
  const int plane = in.data.dim(1) * in.data.dim(2);
  for (int c = 0; c < in.data.dim(0); ++c) {
    TensorF ch = channel_of(in.data, c);
    if (mirror) {
      ch = img::mirror_h(ch);
      // Mirroring flips the direction of horizontal motion.
      if (flow && c % 2 == 0)
        for (std::int64_t i = 0; i < ch.numel(); ++i) ch[i] = -ch[i];
    }
    ch = img::shift2d(ch, dy, dx, /*zero_fill=*/flow);
    std::copy(ch.data(), ch.data() + plane, out.data.data() + c * plane);
  }
  return out;
}

}  // namespace

std::vector<Cuboid> augment(const Cuboid& c) {
  static constexpr int kShifts[4][2] = {{-5, -5}, {-5, 5}, {5, -5}, {5, 5}};
  std::vector<Cuboid> out;
  out.reserve(8);
  for (int mirror = 0; mirror < 2; ++mirror)
    for (const auto& s : kShifts) out.push_back(transformed(c, mirror == 1, s[0], s[1]));
  return out;
}

namespace {

TensorF resize_flow(const TensorF& f, int oh, int ow) {
  const int h = f.dim(1), w = f.dim(2);
  TensorF out({2, oh, ow});
  const float sx = static_cast<float>(ow) / static_cast<float>(w);
  const float sy = static_cast<float>(oh) / static_cast<float>(h);
  for (int c = 0; c < 2; ++c) {
    TensorF plane = img::resize_bilinear(
        TensorF({h, w}, std::vector<float>(f.data() + c * h * w, f.data() + (c + 1) * h * w)), oh, ow);
    const float scale = c == 0 ? sx : sy;  // vectors rescale with their axis
    for (std::int64_t i = 0; i < plane.numel(); ++i) plane[i] *= scale;
    std::copy(plane.data(), plane.data() + plane.numel(), out.data() + c * oh * ow);
  }
  return out;
}

}  // namespace

FrameSequence load_sequence(const io::SequenceEntry& entry, const std::string& base_dir,
                            const PipelineConfig& cfg, const std::string& modality) {
  cfg.validate();
  const bool flow = modality == "flow";
  const std::string ext = flow ? ".flo" : ".pgm";
  namespace fs = std::filesystem;
  fs::path dir = fs::path(base_dir) / entry.dir;
  // one manifest can serve several modalities laid out as subdirectories
  if (fs::is_directory(dir / modality)) dir /= modality;
  if (!fs::is_directory(dir)) throw IoError("sequence directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no " + ext + " frames in " + dir.string());

  FrameSequence seq;
  seq.seq_id = entry.seq_id;
  seq.subject_id = entry.subject_id;
  seq.scenario = entry.scenario;
  seq.viewpoint = entry.viewpoint;
  seq.split = entry.split;
  seq.frames.reserve(files.size());
  for (const fs::path& p : files) {
    TensorF f = flow ? io::read_flo(p.string()) : io::read_pgm(p.string());
    if (modality == "depth") f = img::fill_holes_scanline(f);
    if (frame_height(f) != cfg.frame_size || frame_width(f) != cfg.resize_w)
      f = flow ? resize_flow(f, cfg.frame_size, cfg.resize_w)
               : img::resize_bilinear(f, cfg.frame_size, cfg.resize_w);
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

}  // namespace gait::ingest
