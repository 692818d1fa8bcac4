#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "gait/errors.hpp"
#include "gait/flow.hpp"
#include "gait/image.hpp"
#include "gait/ingest.hpp"
#include "gait/synth.hpp"

using namespace gait;
using cli::SyntheticSpec;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string dir(const std::string& n) const { return (path / n).string(); }
};

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.subjects = 2;
  spec.sequences = 3;
  spec.frames = 6;
  spec.height = 60;
  spec.width = 72;
  spec.seed = 21;
  return spec;
}

}  // namespace

TEST_CASE("the same seed renders a bit-identical corpus") {
  TempDir tmp("gait_synth_det");
  auto spec = small_spec();
  cli::generate_synthetic(spec, tmp.dir("a"));
  cli::generate_synthetic(spec, tmp.dir("b"));
  CHECK(cli::tree_hash(tmp.dir("a")) == cli::tree_hash(tmp.dir("b")));

  spec.seed = 22;
  cli::generate_synthetic(spec, tmp.dir("c"));
  CHECK(cli::tree_hash(tmp.dir("a")) != cli::tree_hash(tmp.dir("c")));
}

TEST_CASE("subject parameters are stratified apart and reproducible") {
  const int n = 10;
  std::vector<double> stride, period, gray;
  for (int s = 0; s < n; ++s) {
    auto p = cli::subject_params(7, s, n);
    auto again = cli::subject_params(7, s, n);
    CHECK(p.stride == again.stride);
    CHECK(p.phase == again.phase);
    stride.push_back(p.stride);
    period.push_back(p.period);
    gray.push_back(p.base_gray);
  }
  auto min_gap = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double g = 1e9;
    for (std::size_t i = 1; i < v.size(); ++i) g = std::min(g, v[i] - v[i - 1]);
    return g;
  };
  CHECK(min_gap(stride) > 0.03);  // slots keep identities apart in every cue
  CHECK(min_gap(period) > 0.3);
  CHECK(min_gap(gray) > 3.0);
  CHECK_THROWS_AS(cli::subject_params(7, 10, 10), ConfigError);
}

TEST_CASE("the walker body stays inside the default frame") {
  SyntheticSpec spec;  // defaults: 75x100, 40 frames
  for (int s = 0; s < spec.subjects; ++s) {
    auto p = cli::subject_params(spec.seed, s, spec.subjects);
    for (int t = 0; t <= spec.frames; ++t) {
      auto parts = cli::walker_parts(p, t, spec.height, spec.width, false, false);
      for (std::size_t k = 0; k < parts.size(); ++k) {
        CHECK(parts[k].cx - parts[k].rx >= -1.0);
        CHECK(parts[k].cx + parts[k].rx <= spec.width + 1.0);
        CHECK(parts[k].cy - parts[k].ry >= -1.0);
        CHECK(parts[k].cy + parts[k].ry <= spec.height + 1.0);
      }
    }
  }
}

TEST_CASE("estimated flow tracks the analytic field to subpixel mean error") {
  auto p = cli::subject_params(11, 0, 3);
  const int h = 75, w = 100;
  auto now = cli::walker_parts(p, 6, h, w, false, false);
  auto next = cli::walker_parts(p, 7, h, w, false, false);

  TensorF gt = cli::exact_flow(now, next, h, w);
  TensorF est = flow::estimate(cli::render_gray(now, h, w), cli::render_gray(next, h, w));

  double err_sum = 0.0, fg_sum = 0.0;
  int fg = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double du = est.at(0, y, x) - gt.at(0, y, x);
      const double dv = est.at(1, y, x) - gt.at(1, y, x);
      const double e = std::sqrt(du * du + dv * dv);
      err_sum += e;
      if (gt.at(0, y, x) != 0.0f || gt.at(1, y, x) != 0.0f) {
        fg_sum += e;
        ++fg;
      }
    }
  REQUIRE(fg > 100);  // the walker actually moved
  CHECK(err_sum / (h * w) < 1.0);
  CHECK(fg_sum / fg < 1.0);
}

TEST_CASE("generated flow keeps horizontal motion on the even cuboid channels") {
  TempDir tmp("gait_synth_flow");
  auto spec = small_spec();
  spec.frames = 30;
  auto data = cli::generate_synthetic(spec, tmp.dir("d"));

  ingest::PipelineConfig cfg;
  const auto& entry = data.classify_entries.front();
  auto seq = ingest::load_sequence(entry, data.root, cfg, "flow");
  auto cubs = ingest::build_cuboids(seq, cfg, "flow");
  REQUIRE(cubs.size() == 2);  // (30-25)/5+1
  REQUIRE(cubs[0].data.dim(0) == 50);

  // the walker translates along x, so u dominates v after ingestion
  double u_abs = 0.0, v_abs = 0.0, u_mean = 0.0;
  std::int64_t per_channel = 60 * 60;
  for (int c = 0; c < 50; c += 2)
    for (int y = 0; y < 60; ++y)
      for (int x = 0; x < 60; ++x) {
        u_abs += std::abs(cubs[0].data.at(c, y, x));
        u_mean += cubs[0].data.at(c, y, x);
        v_abs += std::abs(cubs[0].data.at(c + 1, y, x));
      }
  u_abs /= 25.0 * per_channel;
  v_abs /= 25.0 * per_channel;
  u_mean /= 25.0 * per_channel;
  CHECK(u_abs > 2.0 * v_abs);
  CHECK(std::abs(u_mean) > 0.01);
}

TEST_CASE("scenario toggles append perturbed probe-only sequences") {
  TempDir tmp("gait_synth_scen");
  auto spec = small_spec();
  spec.bag = true;
  spec.coat = true;
  auto data = cli::generate_synthetic(spec, tmp.dir("d"));

  REQUIRE(data.classify_entries.size() == 2 * (3 + 2));
  int bg = 0, cl = 0;
  for (const auto& e : data.classify_entries) {
    if (e.scenario == "bg") {
      ++bg;
      CHECK(e.split == "test");
    }
    if (e.scenario == "cl") {
      ++cl;
      CHECK(e.split == "test");
    }
  }
  CHECK(bg == 2);
  CHECK(cl == 2);

  // the bag adds pixels; the coat widens the silhouette
  auto p = cli::subject_params(spec.seed, 0, spec.subjects);
  auto plain = cli::render_gray(cli::walker_parts(p, 5, 60, 72, false, false), 60, 72);
  auto bagged = cli::render_gray(cli::walker_parts(p, 5, 60, 72, true, false), 60, 72);
  auto coated = cli::render_gray(cli::walker_parts(p, 5, 60, 72, false, true), 60, 72);
  int plain_fg = 0, bag_fg = 0, coat_fg = 0;
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 72; ++x) {
      plain_fg += plain.at(y, x) > 0.0f;
      bag_fg += bagged.at(y, x) > 0.0f;
      coat_fg += coated.at(y, x) > 0.0f;
    }
  CHECK(bag_fg > plain_fg);
  CHECK(coat_fg > plain_fg);
}

TEST_CASE("the transfer manifest keeps training identities away from the gallery") {
  TempDir tmp("gait_synth_transfer");
  auto spec = small_spec();
  spec.subjects = 4;
  auto data = cli::generate_synthetic(spec, tmp.dir("d"));

  std::set<int> train_ids, probe_ids, classify_train, classify_test;
  for (const auto& e : data.transfer_entries) {
    if (e.split == "train" || e.split == "val") train_ids.insert(e.subject_id);
    if (e.split == "test-gallery" || e.split == "test") probe_ids.insert(e.subject_id);
  }
  REQUIRE_FALSE(train_ids.empty());
  REQUIRE_FALSE(probe_ids.empty());
  for (int id : train_ids) CHECK(probe_ids.count(id) == 0);

  for (const auto& e : data.classify_entries) {
    if (e.split == "train") classify_train.insert(e.subject_id);
    if (e.split == "test") classify_test.insert(e.subject_id);
  }
  CHECK(classify_train == classify_test);  // held-out sequences, same people

  // both manifests parse back
  CHECK(io::read_manifest(data.classify_manifest).size() == data.classify_entries.size());
  CHECK(io::read_manifest(data.transfer_manifest).size() == data.transfer_entries.size());
}

TEST_CASE("depth holes are present in the raw render and filled by the pipeline") {
  auto p = cli::subject_params(5, 0, 2);
  auto parts = cli::walker_parts(p, 3, 60, 72, false, false);
  TensorF depth = cli::render_depth(parts, 60, 72, 3);

  int holes = 0;
  int probe_y = -1, probe_x = -1;
  for (int y = 1; y < 59; ++y)
    for (int x = 1; x < 71; ++x)
      if (depth.at(y, x) == 0.0f && depth.at(y, x - 1) > 0.0f && depth.at(y, x + 1) > 0.0f) {
        ++holes;
        probe_y = y;
        probe_x = x;
      }
  REQUIRE(holes > 0);
  TensorF filled = img::fill_holes_scanline(depth);
  CHECK(filled.at(probe_y, probe_x) > 0.0f);
}

TEST_CASE("the default corpus matches the pinned sequence and window counts") {
  TempDir tmp("gait_synth_default");
  SyntheticSpec spec;  // 10 subjects x 6 sequences x 40 frames
  auto data = cli::generate_synthetic(spec, tmp.dir("d"));

  REQUIRE(data.classify_entries.size() == 60);
  int train = 0, val = 0, test = 0;
  for (const auto& e : data.classify_entries) {
    train += e.split == "train";
    val += e.split == "val";
    test += e.split == "test";
  }
  CHECK(train == 40);
  CHECK(val == 10);
  CHECK(test == 10);

  ingest::PipelineConfig cfg;
  for (const std::string modality : {"gray", "depth", "flow"}) {
    auto seq = ingest::load_sequence(data.classify_entries[0], data.root, cfg, modality);
    CHECK(seq.frames.size() == 40);
    auto cubs = ingest::build_cuboids(seq, cfg, modality);
    CHECK(cubs.size() == 4);  // (40-25)/5+1
  }
}

TEST_CASE("degenerate corpus specs are rejected") {
  SyntheticSpec spec;
  spec.subjects = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SyntheticSpec{};
  spec.sequences = 2;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SyntheticSpec{};
  spec.frames = 1;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SyntheticSpec{};
  spec.width = 30;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}
