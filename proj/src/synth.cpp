#include "gait/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <vector>

#include "gait/errors.hpp"
#include "gait/rng.hpp"

namespace gait::cli {

namespace fs = std::filesystem;

void SyntheticSpec::validate() const {
  if (subjects < 1) throw ConfigError("synthetic spec: need at least one subject");
  if (sequences < 3)
    throw ConfigError("synthetic spec: need >= 3 sequences per subject (train/val/test)");
  if (frames < 2) throw ConfigError("synthetic spec: need >= 2 frames");
  if (height < 50 || width < 48)
    throw ConfigError("synthetic spec: frame must be at least 48x50 to fit a walker");
}

SubjectParams subject_params(std::uint64_t seed, int subject, int subjects) {
  if (subjects < 1 || subject < 0 || subject >= subjects)
    throw ConfigError("subject_params: subject outside [0, subjects)");
  const auto n = static_cast<std::size_t>(subjects);

  // one shuffled slot order per stratified parameter, shared by all subjects
  Rng perm_rng = Rng(seed).fork(0x73747261ULL);
  std::vector<std::vector<int>> perms;
  for (int p = 0; p < 6; ++p) {
    std::vector<int> ord(n);
    for (std::size_t i = 0; i < n; ++i) ord[i] = static_cast<int>(i);
    perm_rng.shuffle(ord);
    perms.push_back(std::move(ord));
  }
  const auto s = static_cast<std::size_t>(subject);
  Rng own = Rng(seed).fork(1000 + static_cast<std::uint64_t>(subject));
  auto slot = [&](int p) {
    return (perms[static_cast<std::size_t>(p)][s] + own.next_range(0.2, 0.8)) / subjects;
  };

  SubjectParams sp{};
  sp.stride = 0.9 + 0.8 * slot(0);
  sp.period = 14.0 + 8.0 * slot(1);
  sp.leg_amp = 4.5 + 3.5 * slot(2);
  const double size = slot(3);
  sp.body_rx = 6.0 + 3.0 * size;
  sp.body_ry = 11.0 + 3.0 * size;
  sp.bounce = 1.0 + 1.5 * slot(4);
  const double tone = slot(5);
  sp.base_gray = 150.0 + 80.0 * tone;
  sp.depth_base = 160.0 + 40.0 * tone;
  sp.phase = own.next_range(0.0, 2.0 * std::numbers::pi);
  sp.arm_amp = own.next_range(2.5, 4.5);
  sp.head_r = own.next_range(3.5, 5.0);
  return sp;
}

std::vector<Part> walker_parts(const SubjectParams& p, int frame, int height, int width,
                               bool bag, bool coat) {
  constexpr double kPi = std::numbers::pi;
  const double t = frame;

  // ping-pong walk keeps the body inside the frame for any length
  const double margin = 14.0;
  const double span = width - 2.0 * margin;
  const double m = std::fmod(p.stride * t, 2.0 * span);
  const double x = margin + (m <= span ? m : 2.0 * span - m);

  const double dy = p.bounce * std::sin(4.0 * kPi * t / p.period + p.phase);
  const double y_feet = height - 12.0;
  const double body_rx = p.body_rx * (coat ? 1.45 : 1.0);
  const double body_ry = p.body_ry + (coat ? 3.0 : 0.0);
  const double torso_cy = y_feet - 17.0 - p.body_ry + dy;

  auto swing = [&](double amp, double offset) {
    return amp * std::sin(2.0 * kPi * t / p.period + p.phase + offset);
  };

  std::vector<Part> parts;
  parts.push_back({x, torso_cy, body_rx, body_ry, p.base_gray, p.depth_base});
  parts.push_back({x + 1.0, torso_cy - body_ry - p.head_r - 1.0, p.head_r, p.head_r,
                   0.92 * p.base_gray, p.depth_base - 6.0});
  for (int k = 0; k < 2; ++k)
    parts.push_back({x + swing(p.leg_amp, k * kPi), y_feet - 8.5 + 0.3 * dy, 2.8, 8.5,
                     0.85 * p.base_gray, p.depth_base + 10.0});
  for (int k = 0; k < 2; ++k)
    parts.push_back({x + swing(p.arm_amp, k * kPi + kPi), torso_cy + 3.0, 2.2, 6.5,
                     0.76 * p.base_gray, p.depth_base - 12.0});
  if (bag)
    parts.push_back({x - body_rx - 3.0, torso_cy + 2.0, 3.5, 5.0, 0.68 * p.base_gray,
                     p.depth_base - 20.0});
  return parts;
}

namespace {

// Shaded soft ellipse: bright center, anti-aliased rim. Returns 0 outside.
double contribution(const Part& p, int y, int x) {
  const double nx = (x - p.cx) / p.rx;
  const double ny = (y - p.cy) / p.ry;
  const double r2 = nx * nx + ny * ny;
  if (r2 >= 1.0) return 0.0;
  const double edge = std::min(1.0, (1.0 - r2) / 0.2);
  return p.gray * (1.0 - 0.35 * r2) * edge;
}

// Per-pixel winner (strongest contribution; earlier part on ties).
void rasterize(const std::vector<Part>& parts, int h, int w, TensorF* gray,
               std::vector<int>* who) {
  if (gray) *gray = TensorF({h, w});
  if (who) who->assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), -1);
  std::vector<double> best(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), 0.0);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Part& p = parts[k];
    const int y0 = std::max(0, static_cast<int>(std::floor(p.cy - p.ry)) - 1);
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(p.cy + p.ry)) + 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(p.cx - p.rx)) - 1);
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(p.cx + p.rx)) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double c = contribution(p, y, x);
        const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                              static_cast<std::size_t>(x);
        if (c > best[i]) {
          best[i] = c;
          if (gray) gray->at(y, x) = static_cast<float>(c);
          if (who) (*who)[i] = static_cast<int>(k);
        }
      }
  }
}

}  // namespace

TensorF render_gray(const std::vector<Part>& parts, int height, int width) {
  TensorF img;
  rasterize(parts, height, width, &img, nullptr);
  return img;
}

TensorF render_depth(const std::vector<Part>& parts, int height, int width, int frame) {
  std::vector<int> who;
  rasterize(parts, height, width, nullptr, &who);
  TensorF img({height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int k = who[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                        static_cast<std::size_t>(x)];
      if (k < 0) continue;
      // deterministic dropout holes exercise the scanline fill stage
      if ((x * 7 + y * 13 + frame * 29) % 53 == 0) continue;
      img.at(y, x) = static_cast<float>(parts[static_cast<std::size_t>(k)].depth);
    }
  return img;
}

TensorF exact_flow(const std::vector<Part>& at_t, const std::vector<Part>& at_t1, int height,
                   int width) {
  if (at_t.size() != at_t1.size()) throw ConfigError("exact_flow: part lists differ");
  std::vector<int> who;
  rasterize(at_t, height, width, nullptr, &who);
  TensorF f({2, height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int k = who[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                        static_cast<std::size_t>(x)];
      if (k < 0) continue;
      const auto i = static_cast<std::size_t>(k);
      f.at(0, y, x) = static_cast<float>(at_t1[i].cx - at_t[i].cx);
      f.at(1, y, x) = static_cast<float>(at_t1[i].cy - at_t[i].cy);
    }
  return f;
}

GeneratedDataset generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  spec.validate();
  fs::create_directories(out_dir);

  GeneratedDataset out;
  out.root = out_dir;
  const int half = spec.subjects / 2;

  for (int s = 0; s < spec.subjects; ++s) {
    const SubjectParams base = subject_params(spec.seed, s, spec.subjects);
    std::vector<std::string> perturbations;
    if (spec.bag) perturbations.push_back("bg");
    if (spec.coat) perturbations.push_back("cl");

    const int runs = spec.sequences + static_cast<int>(perturbations.size());
    for (int r = 0; r < runs; ++r) {
      const std::string scenario =
          r < spec.sequences ? "nm" : perturbations[static_cast<std::size_t>(r - spec.sequences)];

      SubjectParams p = base;  // per-run style jitter, same identity
      Rng run_rng = Rng(spec.seed).fork(2000 + static_cast<std::uint64_t>(s) * 257 +
                                        static_cast<std::uint64_t>(r));
      p.phase = run_rng.next_range(0.0, 2.0 * std::numbers::pi);
      p.stride *= run_rng.next_range(0.96, 1.04);

      char id[32];
      std::snprintf(id, sizeof id, "s%02dr%d", s + 1, r);
      const fs::path seq_dir = fs::path(out_dir) / id;
      fs::create_directories(seq_dir / "gray");
      fs::create_directories(seq_dir / "depth");
      fs::create_directories(seq_dir / "flow");

      std::vector<std::vector<Part>> parts;
      parts.reserve(static_cast<std::size_t>(spec.frames) + 1);
      for (int t = 0; t <= spec.frames; ++t)
        parts.push_back(walker_parts(p, t, spec.height, spec.width, scenario == "bg",
                                     scenario == "cl"));

      for (int t = 0; t < spec.frames; ++t) {
        char frame_name[16];
        std::snprintf(frame_name, sizeof frame_name, "f%03d", t);
        const auto& now = parts[static_cast<std::size_t>(t)];
        const auto& next = parts[static_cast<std::size_t>(t) + 1];
        io::write_pgm((seq_dir / "gray" / (std::string(frame_name) + ".pgm")).string(),
                      render_gray(now, spec.height, spec.width));
        io::write_pgm((seq_dir / "depth" / (std::string(frame_name) + ".pgm")).string(),
                      render_depth(now, spec.height, spec.width, t));
        io::write_flo((seq_dir / "flow" / (std::string(frame_name) + ".flo")).string(),
                      exact_flow(now, next, spec.height, spec.width));
      }

      io::SequenceEntry e;
      e.seq_id = id;
      e.subject_id = s + 1;
      e.scenario = scenario;
      e.viewpoint = "side";
      e.dir = id;

      // same identities, held-out sequences
      if (r < spec.sequences - 2)
        e.split = "train";
      else if (r == spec.sequences - 2)
        e.split = "val";
      else
        e.split = "test";
      out.classify_entries.push_back(e);

      // disjoint identities: first half trains, second half is matched by
      // signature against its own gallery; perturbed runs only ever probe
      if (spec.subjects >= 2) {
        io::SequenceEntry te = e;
        if (s < half) {
          if (r >= spec.sequences) continue;
          te.split = r < spec.sequences - 1 ? "train" : "val";
        } else {
          te.split = r < spec.sequences - 1 ? "test-gallery" : "test";
        }
        out.transfer_entries.push_back(te);
      }
    }
  }

  out.classify_manifest = (fs::path(out_dir) / "manifest.txt").string();
  io::write_manifest(out.classify_manifest, out.classify_entries);
  if (!out.transfer_entries.empty()) {
    out.transfer_manifest = (fs::path(out_dir) / "manifest_transfer.txt").string();
    io::write_manifest(out.transfer_manifest, out.transfer_entries);
  }
  return out;
}

std::uint64_t tree_hash(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const fs::path& rel : files) {
    const std::string name = rel.generic_string();
    h = io::fnv1a64(name.data(), name.size(), h);
    const auto bytes = io::read_bytes((fs::path(dir) / rel).string());
    h = io::fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

}  // namespace gait::cli
