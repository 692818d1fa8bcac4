#include "gait/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <set>
#include <utility>

#include "gait/errors.hpp"
#include "gait/zoo.hpp"

namespace gait::cli {

namespace fs = std::filesystem;

namespace {

std::string hex16(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Any stage failure surfaces with the stage name and the config hash, in the
// original exception type.
template <typename F>
auto stage(const char* name, std::uint64_t hash, F&& f) -> decltype(f()) {
  const std::string prefix = std::string("stage ") + name + " (config " + hex16(hash) + "): ";
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  }
}

std::string resolve(const std::string& base, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

bool early_fusion(const std::string& fusion) { return fusion.rfind("early:", 0) == 0; }

}  // namespace

std::uint64_t ExperimentConfig::hash() const { return cfg::hash(raw); }

void ExperimentConfig::validate() const {
  if (manifest.empty()) throw ConfigError("experiment: dataset.manifest is required");
  if (!io::file_exists(manifest))
    throw ConfigError("experiment: manifest not found: " + manifest);
  if (out_dir.empty()) throw ConfigError("experiment: output.dir is required");
  if (modalities.empty()) throw ConfigError("experiment: dataset.modalities is empty");

  std::set<std::string> seen;
  for (const std::string& m : modalities) {
    zoo::modality_channels(m);  // rejects unknown modality tags
    if (!seen.insert(m).second)
      throw ConfigError("experiment: modality '" + m + "' listed twice");
    auto it = arch.find(m);
    if (it == arch.end())
      throw ConfigError("experiment: missing arch entry for modality '" + m + "'");
    if (it->second != "2dcnn" && it->second != "3dcnn" && it->second != "resnet-a" &&
        it->second != "resnet-b")
      throw ConfigError("experiment: unknown architecture '" + it->second + "'");
  }

  if (fusion == "none") {
    if (modalities.size() != 1)
      throw ConfigError("experiment: fusion 'none' takes exactly one modality");
  } else if (early_fusion(fusion)) {
    const std::string pos = fusion.substr(6);
    if (pos.size() != 2 || pos[0] != 'P' || pos[1] < '1' || pos[1] > '5')
      throw ConfigError("experiment: early fusion position must be P1..P5, got '" + pos + "'");
    if (modalities.size() < 2)
      throw ConfigError("experiment: early fusion needs at least two modalities");
  } else if (fusion != "sm-prod" && fusion != "weighted-sum" && fusion != "knn-prod") {
    throw ConfigError("experiment: unknown fusion method '" + fusion + "'");
  }

  if (aggregation != "sm-prod" && aggregation != "sm-vote")
    throw ConfigError("experiment: aggregation must be sm-prod or sm-vote");
  if (!(width > 0.0) || width > 1.0)
    throw ConfigError("experiment: width must be in (0, 1]");
  if (knn_k < 1) throw ConfigError("experiment: knn_k must be >= 1");

  if (fusion == "weighted-sum" && beta != "default" && beta != "grid") {
    classify::FusionWeights w;
    for (const std::string& tok : cfg::Config{{{"b", beta}}}.list("b"))
      w.beta.push_back(std::stod(tok));
    if (w.beta.size() != modalities.size())
      throw ConfigError("experiment: beta needs one weight per modality");
    w.validate();
  }

  train.validate();
  pipeline.validate();
}

ExperimentConfig load_experiment(const cfg::Config& c, const std::string& config_dir) {
  ExperimentConfig e;
  e.raw = c;
  e.manifest = resolve(config_dir, c.require("dataset.manifest"));
  e.modalities = c.list("dataset.modalities");
  for (const std::string& m : e.modalities) e.arch[m] = c.str("arch." + m, "2dcnn");
  e.fusion = c.str("fusion.method", "none");
  e.aggregation = c.str("fusion.aggregation", "sm-prod");
  e.beta = c.str("fusion.beta", "default");
  e.knn_k = static_cast<int>(c.integer("fusion.knn_k", 7));
  e.out_dir = resolve(config_dir, c.str("output.dir", "out"));
  e.seed = static_cast<std::uint64_t>(c.integer("seed", 1));
  e.strict = c.boolean("strict", false);

  train::TrainConfig& t = e.train;
  t.lr = c.num("train.lr", t.lr);
  t.momentum = c.num("train.momentum", t.momentum);
  t.weight_decay = c.num("train.weight_decay", t.weight_decay);
  t.dropout = c.num("train.dropout", t.dropout);
  t.batch = static_cast<int>(c.integer("train.batch", t.batch));
  t.max_epochs = static_cast<int>(c.integer("train.max_epochs", t.max_epochs));
  t.lr_decay_factor = c.num("train.lr_decay_factor", t.lr_decay_factor);
  t.plateau_window = static_cast<int>(c.integer("train.plateau_window", t.plateau_window));
  t.plateau_epsilon = c.num("train.plateau_epsilon", t.plateau_epsilon);
  t.joint_epochs = static_cast<int>(c.integer("train.joint_epochs", t.joint_epochs));
  e.width = c.num("train.width", 1.0);
  e.curriculum = c.boolean("train.curriculum", false);
  e.augment = c.boolean("train.augment", false);

  ingest::PipelineConfig& p = e.pipeline;
  p.frame_size = static_cast<int>(c.integer("pipeline.frame_size", p.frame_size));
  p.window_len = static_cast<int>(c.integer("pipeline.window_len", p.window_len));
  p.overlap = c.num("pipeline.overlap", p.overlap);
  p.resize_w = static_cast<int>(c.integer("pipeline.resize_w", p.resize_w));
  p.fg_threshold = static_cast<float>(c.num("pipeline.fg_threshold", p.fg_threshold));
  p.flow_threshold = static_cast<float>(c.num("pipeline.flow_threshold", p.flow_threshold));
  p.range_rule = c.str("pipeline.range_rule", p.range_rule);
  p.mean_mode = c.str("pipeline.mean_mode", p.mean_mode);

  e.validate();
  return e;
}

ExperimentConfig load_experiment_file(const std::string& path) {
  return load_experiment(cfg::parse_file(path), fs::path(path).parent_path().string());
}

void protocol_guard(const std::vector<io::SequenceEntry>& entries) {
  std::map<std::string, std::string> split_of;
  for (const io::SequenceEntry& e : entries) {
    auto [it, fresh] = split_of.emplace(e.seq_id, e.split);
    if (!fresh)
      throw ConfigError("protocol violation: sequence '" + e.seq_id + "' appears in split '" +
                        it->second + "' and again in '" + e.split +
                        "'; probe data would leak into fitted statistics");
  }
}

std::map<int, int> label_map(const std::vector<io::SequenceEntry>& entries) {
  std::set<int> ids;
  for (const io::SequenceEntry& e : entries)
    if (e.split == "train") ids.insert(e.subject_id);
  std::map<int, int> labels;
  for (int id : ids) labels.emplace(id, static_cast<int>(labels.size()));
  return labels;
}

ModalityData ingest_modality(const std::vector<io::SequenceEntry>& entries,
                             const std::string& base_dir, const ExperimentConfig& cfg,
                             const std::string& modality,
                             const std::map<int, int>& labels) {
  ModalityData d;
  d.modality = modality;

  auto label_of = [&](int subject, const std::string& seq) {
    auto it = labels.find(subject);
    if (it == labels.end())
      throw ConfigError("subject " + std::to_string(subject) + " of sequence '" + seq +
                        "' has no training identity");
    return it->second;
  };

  std::vector<ingest::Cuboid> train_cubs;
  struct Held {
    io::SequenceEntry entry;
    std::vector<ingest::Cuboid> cubs;
  };
  std::vector<Held> held;

  for (const io::SequenceEntry& e : entries) {
    auto seq = ingest::load_sequence(e, base_dir, cfg.pipeline, modality);
    auto cubs = ingest::build_cuboids(seq, cfg.pipeline, modality);
    if (cubs.empty())
      throw ConfigError("sequence '" + e.seq_id + "' is shorter than one window");
    for (ingest::Cuboid& c : cubs) c = ingest::scaled(std::move(c), cfg.pipeline);
    if (e.split == "train")
      train_cubs.insert(train_cubs.end(), std::make_move_iterator(cubs.begin()),
                        std::make_move_iterator(cubs.end()));
    else
      held.push_back({e, std::move(cubs)});
  }
  if (train_cubs.empty()) throw ConfigError("manifest has no train sequences");

  d.mean = ingest::compute_mean(train_cubs, cfg.pipeline);

  for (ingest::Cuboid& c : train_cubs) {
    ingest::Cuboid n = ingest::normalize(std::move(c), d.mean);
    const int label = label_of(n.subject_id, n.seq_id);
    if (cfg.augment)
      for (ingest::Cuboid& a : ingest::augment(n)) d.train_set.add(std::move(a.data), label);
    d.train_set.add(std::move(n.data), label);  // the original is always kept
  }

  for (Held& h : held) {
    Video v;
    v.seq_id = h.entry.seq_id;
    v.scenario = h.entry.scenario;
    v.subject_id = h.entry.subject_id;
    for (ingest::Cuboid& c : h.cubs) {
      ingest::Cuboid n = ingest::normalize(std::move(c), d.mean);
      if (h.entry.split == "val")
        d.val_set.add(n.data, label_of(n.subject_id, n.seq_id));
      v.windows.push_back({std::move(n.data)});
    }
    if (h.entry.split == "val")
      d.val_videos.push_back(std::move(v));
    else if (h.entry.split == "test")
      d.test_videos.push_back(std::move(v));
    else
      d.gallery_videos.push_back(std::move(v));
  }
  return d;
}

ModalityData merge_for_early_fusion(const std::vector<ModalityData>& parts) {
  if (parts.size() < 2) throw ConfigError("early fusion needs at least two modalities");
  ModalityData merged;
  merged.modality = parts.front().modality;
  for (std::size_t i = 1; i < parts.size(); ++i)
    merged.modality += "+" + parts[i].modality;
  merged.mean = parts.front().mean;

  auto zip_sets = [&](auto pick) {
    train::Dataset out;
    const train::Dataset& first = pick(parts.front());
    for (int i = 0; i < first.size(); ++i) {
      std::vector<TensorF> sample;
      for (const ModalityData& p : parts) {
        const train::Dataset& ds = pick(p);
        if (ds.size() != first.size() || ds.labels[static_cast<std::size_t>(i)] !=
                                             first.labels[static_cast<std::size_t>(i)])
          throw ConfigError("early fusion: modality window sets disagree");
        for (const TensorF& t : ds.samples[static_cast<std::size_t>(i)]) sample.push_back(t);
      }
      out.samples.push_back(std::move(sample));
      out.labels.push_back(first.labels[static_cast<std::size_t>(i)]);
    }
    return out;
  };
  merged.train_set = zip_sets([](const ModalityData& p) -> const train::Dataset& {
    return p.train_set;
  });
  merged.val_set = zip_sets([](const ModalityData& p) -> const train::Dataset& {
    return p.val_set;
  });

  auto zip_videos = [&](auto pick) {
    std::vector<Video> out;
    const std::vector<Video>& first = pick(parts.front());
    for (std::size_t v = 0; v < first.size(); ++v) {
      Video merged_video = first[v];
      for (std::size_t m = 1; m < parts.size(); ++m) {
        const std::vector<Video>& vids = pick(parts[m]);
        if (vids.size() != first.size() || vids[v].seq_id != first[v].seq_id ||
            vids[v].windows.size() != first[v].windows.size())
          throw ConfigError("early fusion: modality videos disagree on '" + first[v].seq_id +
                            "'");
        for (std::size_t w = 0; w < vids[v].windows.size(); ++w)
          for (const TensorF& t : vids[v].windows[w])
            merged_video.windows[w].push_back(t);
      }
      out.push_back(std::move(merged_video));
    }
    return out;
  };
  merged.val_videos = zip_videos([](const ModalityData& p) -> const std::vector<Video>& {
    return p.val_videos;
  });
  merged.test_videos = zip_videos([](const ModalityData& p) -> const std::vector<Video>& {
    return p.test_videos;
  });
  merged.gallery_videos = zip_videos([](const ModalityData& p) -> const std::vector<Video>& {
    return p.gallery_videos;
  });
  return merged;
}

TrainedNet train_net(const ModalityData& data, const ExperimentConfig& cfg,
                     const std::string& arch, const std::string& modality) {
  train::TrainConfig tc = cfg.train;
  tc.seed = cfg.seed ^ io::fnv1a64(modality.data(), modality.size());
  const int classes = train::class_count(data.train_set);

  TrainedNet out;
  if (cfg.curriculum) {
    auto r = train::curriculum_train(arch, classes, modality, data.train_set, data.val_set, tc);
    out.graph = std::move(r.graph);
    out.state = std::move(r.state);
    out.log = std::move(r.log);
    return out;
  }
  out.graph = zoo::build(arch, classes, cfg.width, modality);
  train::set_dropout(out.graph, tc.dropout);
  out.state = train::init_state<float>(out.graph, tc);
  train::fit(out.graph, out.state, data.train_set, data.val_set, tc, &out.log);
  return out;
}

std::vector<classify::ScoreVector> window_scores(const GraphDef& g, ParamSet<float>& params,
                                                 const Video& video,
                                                 const std::string& modality) {
  std::vector<classify::ScoreVector> out;
  for (const std::vector<TensorF>& window : video.windows) {
    train::Dataset one;
    one.samples.push_back(window);
    one.labels.push_back(0);
    train::Batch b = train::stack_batch(one, {0});
    std::vector<const TensorF*> inputs;
    for (const TensorF& t : b.inputs) inputs.push_back(&t);
    TensorF scores = run_scores(g, params, inputs);

    classify::ScoreVector s;
    s.source = video.seq_id;
    s.modality = modality;
    s.probs.resize(static_cast<std::size_t>(scores.dim(1)));
    for (int c = 0; c < scores.dim(1); ++c)
      s.probs[static_cast<std::size_t>(c)] = scores.at(0, c);
    out.push_back(std::move(s));
  }
  return out;
}

classify::ScoreVector aggregate_video(const std::vector<classify::ScoreVector>& windows,
                                      const std::string& aggregation) {
  if (aggregation == "sm-prod") return classify::sm_prod(windows);
  if (aggregation != "sm-vote")
    throw ConfigError("unknown aggregation '" + aggregation + "'");

  // vote fractions, with a whisper of the product so that vote ties resolve
  // exactly like sm_vote and ranks below the winner stay meaningful
  if (windows.empty()) throw ConfigError("sm-vote: empty window list");
  classify::ScoreVector prod = classify::sm_prod(windows);
  std::vector<double> votes(prod.probs.size(), 0.0);
  for (const classify::ScoreVector& w : windows)
    votes[static_cast<std::size_t>(classify::argmax(w.probs))] += 1.0;

  classify::ScoreVector out;
  out.source = windows.front().source;
  out.modality = windows.front().modality;
  out.probs.resize(votes.size());
  for (std::size_t c = 0; c < votes.size(); ++c)
    out.probs[c] = votes[c] / static_cast<double>(windows.size()) + 1e-9 * prod.probs[c];
  classify::normalize(out);
  return out;
}

std::vector<classify::GaitSignature> video_signatures(const GraphDef& g,
                                                      ParamSet<float>& params,
                                                      const std::vector<Video>& videos,
                                                      const std::string& modality) {
  std::vector<classify::GaitSignature> out;
  for (const Video& v : videos) {
    classify::GaitSignature sig;
    sig.subject = v.subject_id;
    sig.source = v.seq_id;
    sig.modality = modality;
    for (const std::vector<TensorF>& window : v.windows) {
      train::Dataset one;
      one.samples.push_back(window);
      one.labels.push_back(0);
      train::Batch b = train::stack_batch(one, {0});
      std::vector<const TensorF*> inputs;
      for (const TensorF& t : b.inputs) inputs.push_back(&t);
      TensorF f = run_signatures(g, params, inputs);
      if (sig.features.empty()) sig.features.assign(static_cast<std::size_t>(f.dim(1)), 0.0);
      for (int i = 0; i < f.dim(1); ++i)
        sig.features[static_cast<std::size_t>(i)] += f.at(0, i);
    }
    const double n = static_cast<double>(v.windows.size());
    for (double& x : sig.features) x /= n;
    out.push_back(std::move(sig));
  }
  return out;
}

namespace {

std::vector<io::ScoreLine> as_lines(const std::vector<classify::ScoreVector>& scores) {
  std::vector<io::ScoreLine> lines;
  lines.reserve(scores.size());
  for (const classify::ScoreVector& s : scores) lines.push_back(classify::to_line(s));
  return lines;
}

classify::FusionWeights pick_weights(
    const ExperimentConfig& cfg,
    const std::vector<std::vector<classify::ScoreVector>>& val_scores,
    const std::vector<int>& val_labels) {
  const int n = static_cast<int>(cfg.modalities.size());
  if (cfg.beta == "default") return classify::default_weights(n);
  if (cfg.beta == "grid") {
    if (val_labels.empty())
      throw ConfigError("beta grid search needs a validation split");
    return classify::grid_search_beta(val_scores, val_labels);
  }
  classify::FusionWeights w;
  for (const std::string& tok : cfg::Config{{{"b", cfg.beta}}}.list("b"))
    w.beta.push_back(std::stod(tok));
  w.validate();
  return w;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::uint64_t h = cfg.hash();

  auto entries = stage("manifest", h, [&] { return io::read_manifest(cfg.manifest); });
  stage("protocol-guard", h, [&] {
    protocol_guard(entries);
    return 0;
  });
  const std::map<int, int> labels = label_map(entries);
  if (labels.size() < 2)
    throw ConfigError("stage protocol-guard (config " + hex16(h) +
                      "): need at least two training identities");
  const std::string base_dir = fs::path(cfg.manifest).parent_path().string();

  fs::create_directories(cfg.out_dir);
  const std::string csv_path = (fs::path(cfg.out_dir) / "report.csv").string();
  if (cfg.strict && io::file_exists(csv_path))
    throw ConfigError("strict mode: " + csv_path + " already exists");

  std::vector<ModalityData> data;
  for (const std::string& m : cfg.modalities)
    data.push_back(stage("ingest", h, [&] {
      return ingest_modality(entries, base_dir, cfg, m, labels);
    }));

  ExperimentResult res;
  std::vector<classify::ScoreVector> fused;             // one per test video
  const std::vector<Video>* test_meta = &data.front().test_videos;

  if (early_fusion(cfg.fusion)) {
    ModalityData merged = stage("ingest", h, [&] { return merge_for_early_fusion(data); });

    zoo::FusionSpec spec;
    bool all_resnet = true;
    for (const std::string& m : cfg.modalities) {
      spec.branches.push_back({cfg.arch.at(m), m});
      all_resnet = all_resnet && cfg.arch.at(m).rfind("resnet", 0) == 0;
    }
    spec.position = cfg.fusion.substr(6);
    spec.head = all_resnet ? zoo::FusionHead::Softmax : zoo::FusionHead::FC;
    spec.width = cfg.width;
    spec.dropout_rate = cfg.train.dropout;

    TrainedNet net = stage("train", h, [&] {
      train::TrainConfig tc = cfg.train;
      tc.seed = cfg.seed;
      TrainedNet out;
      out.graph = zoo::build_fusion_net(spec, static_cast<int>(labels.size()));
      train::set_dropout(out.graph, tc.dropout);
      out.state = train::init_state<float>(out.graph, tc);
      train::fit(out.graph, out.state, merged.train_set, merged.val_set, tc, &out.log);
      return out;
    });
    const std::string ckpt = (fs::path(cfg.out_dir) / "fused.ckpt").string();
    train::save_state(ckpt, net.state, h);
    res.checkpoints["fused"] = ckpt;

    stage("score", h, [&] {
      std::vector<classify::ScoreVector> video_level;
      for (const Video& v : merged.test_videos)
        video_level.push_back(aggregate_video(
            window_scores(net.graph, net.state.params, v, merged.modality), cfg.aggregation));
      io::write_scores((fs::path(cfg.out_dir) / "scores_fused_test.txt").string(),
                       as_lines(video_level));
      fused = std::move(video_level);
      return 0;
    });

    // evaluate against the merged video list
    eval::EvalReport report = stage("eval", h, [&] {
      std::vector<eval::ScoredSample> samples;
      for (std::size_t v = 0; v < merged.test_videos.size(); ++v) {
        const Video& video = merged.test_videos[v];
        auto it = labels.find(video.subject_id);
        if (it == labels.end())
          throw ConfigError("test subject " + std::to_string(video.subject_id) +
                            " has no training identity");
        samples.push_back({video.scenario, fused[v].probs, it->second});
      }
      return eval::evaluate(samples);
    });
    report.config_hash = h;
    report.seed = cfg.seed;
    res.report = std::move(report);
    eval::emit_report(res.report, csv_path, "csv");
    const std::string text_path = (fs::path(cfg.out_dir) / "report.txt").string();
    eval::emit_report(res.report, text_path, "text");
    res.report_csv = csv_path;
    res.report_text = text_path;
    return res;
  }

  // late pipeline: per-modality nets, per-video aggregation, then fusion
  std::vector<std::vector<classify::ScoreVector>> val_scores(cfg.modalities.size());
  std::vector<std::vector<classify::ScoreVector>> test_scores(cfg.modalities.size());
  std::vector<std::vector<classify::ScoreVector>> knn_scores(cfg.modalities.size());
  std::vector<int> gallery_classes;

  for (std::size_t mi = 0; mi < cfg.modalities.size(); ++mi) {
    const std::string& m = cfg.modalities[mi];
    TrainedNet net = stage("train", h, [&] {
      return train_net(data[mi], cfg, cfg.arch.at(m), m);
    });
    const std::string ckpt = (fs::path(cfg.out_dir) / (m + ".ckpt")).string();
    train::save_state(ckpt, net.state, h);
    res.checkpoints[m] = ckpt;

    stage("score", h, [&] {
      for (const Video& v : data[mi].val_videos)
        val_scores[mi].push_back(aggregate_video(
            window_scores(net.graph, net.state.params, v, m), cfg.aggregation));
      for (const Video& v : data[mi].test_videos)
        test_scores[mi].push_back(aggregate_video(
            window_scores(net.graph, net.state.params, v, m), cfg.aggregation));
      if (!val_scores[mi].empty())
        io::write_scores((fs::path(cfg.out_dir) / ("scores_" + m + "_val.txt")).string(),
                         as_lines(val_scores[mi]));
      io::write_scores((fs::path(cfg.out_dir) / ("scores_" + m + "_test.txt")).string(),
                       as_lines(test_scores[mi]));
      return 0;
    });

    if (cfg.fusion == "knn-prod") {
      stage("score", h, [&] {
        if (data[mi].gallery_videos.empty())
          throw ConfigError("knn fusion needs test-gallery sequences in the manifest");
        auto gallery = video_signatures(net.graph, net.state.params, data[mi].gallery_videos, m);
        auto probes = video_signatures(net.graph, net.state.params, data[mi].test_videos, m);
        if (gallery_classes.empty()) {
          std::set<int> ids;
          for (const auto& g : gallery) ids.insert(g.subject);
          gallery_classes.assign(ids.begin(), ids.end());
        }
        // small galleries cap k; the strict bound check stays in knn_classify
        const int k = std::min(cfg.knn_k, static_cast<int>(gallery.size()));
        for (const auto& probe : probes) {
          auto r = classify::knn_classify(probe, gallery, k);
          knn_scores[mi].push_back(
              classify::knn_score_vector(r, gallery_classes, probe.source, m + "-knn"));
        }
        io::write_scores((fs::path(cfg.out_dir) / ("scores_" + m + "_knn.txt")).string(),
                         as_lines(knn_scores[mi]));
        return 0;
      });
    }
  }

  // fusion across modalities
  stage("fuse", h, [&] {
    const std::size_t n_test = test_scores.front().size();
    if (cfg.fusion == "none") {
      fused = test_scores.front();
      return 0;
    }
    if (cfg.fusion == "knn-prod") {
      for (std::size_t v = 0; v < knn_scores.front().size(); ++v) {
        std::vector<classify::ScoreVector> layer;
        for (auto& per_mod : knn_scores) layer.push_back(per_mod[v]);
        fused.push_back(classify::fuse_product(layer));
      }
      return 0;
    }
    if (cfg.fusion == "weighted-sum") {
      std::vector<int> val_labels;
      for (const Video& v : data.front().val_videos) val_labels.push_back(labels.at(v.subject_id));
      res.weights = pick_weights(cfg, val_scores, val_labels);
    }
    for (std::size_t v = 0; v < n_test; ++v) {
      std::vector<classify::ScoreVector> layer;
      for (auto& per_mod : test_scores) layer.push_back(per_mod[v]);
      fused.push_back(cfg.fusion == "sm-prod" ? classify::fuse_product(layer)
                                              : classify::fuse_weighted_sum(layer, res.weights));
    }
    return 0;
  });
  io::write_scores((fs::path(cfg.out_dir) / "scores_fused_test.txt").string(), as_lines(fused));

  eval::EvalReport report = stage("eval", h, [&] {
    std::vector<eval::ScoredSample> samples;
    if (cfg.fusion == "knn-prod") {
      for (std::size_t v = 0; v < test_meta->size(); ++v) {
        const Video& video = (*test_meta)[v];
        auto it = std::find(gallery_classes.begin(), gallery_classes.end(), video.subject_id);
        if (it == gallery_classes.end())
          throw ConfigError("probe subject " + std::to_string(video.subject_id) +
                            " is missing from the gallery");
        samples.push_back({video.scenario, fused[v].probs,
                           static_cast<int>(it - gallery_classes.begin())});
      }
    } else {
      for (std::size_t v = 0; v < test_meta->size(); ++v) {
        const Video& video = (*test_meta)[v];
        auto it = labels.find(video.subject_id);
        if (it == labels.end())
          throw ConfigError("test subject " + std::to_string(video.subject_id) +
                            " has no training identity");
        samples.push_back({video.scenario, fused[v].probs, it->second});
      }
    }
    return eval::evaluate(samples);
  });
  report.config_hash = h;
  report.seed = cfg.seed;
  res.report = std::move(report);

  eval::emit_report(res.report, csv_path, "csv");
  const std::string text_path = (fs::path(cfg.out_dir) / "report.txt").string();
  eval::emit_report(res.report, text_path, "text");
  res.report_csv = csv_path;
  res.report_text = text_path;
  return res;
}

}  // namespace gait::cli
