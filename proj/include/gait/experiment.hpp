#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gait/classify.hpp"
#include "gait/config.hpp"
#include "gait/eval.hpp"
#include "gait/graph.hpp"
#include "gait/ingest.hpp"
#include "gait/io.hpp"
#include "gait/train.hpp"

/// Experiment orchestration: config loading, the ingest -> train -> score ->
/// fuse -> report pipeline, and the protocol guard that keeps probe data out
/// of every fitted statistic.
namespace gait::cli {

struct ExperimentConfig {
  std::string manifest;   // dataset.manifest, resolved relative to the config
  std::string out_dir;    // output.dir
  std::vector<std::string> modalities;      // dataset.modalities
  std::map<std::string, std::string> arch;  // arch.<modality> = 2dcnn|3dcnn|resnet-a|resnet-b
  std::string fusion = "none";        // none|sm-prod|weighted-sum|knn-prod|early:P1..P5
  std::string aggregation = "sm-prod";  // video verdict from windows: sm-prod|sm-vote
  std::string beta = "default";         // weighted-sum weights: default|grid|w1,w2[,w3]
  double width = 1.0;                   // trained width (1.0 = full)
  bool curriculum = false;              // width curriculum instead of a fixed width
  bool augment = false;                 // 8x training-set augmentation
  bool strict = false;                  // refuse to overwrite existing artifacts
  int knn_k = 7;
  std::uint64_t seed = 1;
  train::TrainConfig train;
  ingest::PipelineConfig pipeline;
  cfg::Config raw;  // exact config text backing the hash

  std::uint64_t hash() const;
  void validate() const;
};

/// Reads an experiment description; relative paths resolve against
/// `config_dir`.
ExperimentConfig load_experiment(const cfg::Config& c, const std::string& config_dir);
ExperimentConfig load_experiment_file(const std::string& path);

/// Rejects manifests in which any sequence id occurs twice: a sequence that
/// sits in two splits would leak probe data into means, the beta search or
/// early stopping.
void protocol_guard(const std::vector<io::SequenceEntry>& entries);

/// train-split subject id -> dense class label, sorted by subject id.
std::map<int, int> label_map(const std::vector<io::SequenceEntry>& entries);

/// One scoreable video: its window cuboids, each a per-graph-input list.
struct Video {
  std::string seq_id;
  std::string scenario;
  int subject_id = -1;
  std::vector<std::vector<TensorF>> windows;
};

/// Everything the pipeline derives from one modality of the manifest.
struct ModalityData {
  std::string modality;
  train::Dataset train_set;
  train::Dataset val_set;
  std::vector<Video> val_videos;
  std::vector<Video> test_videos;
  std::vector<Video> gallery_videos;  // non-empty only for transfer manifests
  ingest::ModalityMean mean;
};

/// Ingests, scales, normalizes (train-mean only) and optionally augments.
ModalityData ingest_modality(const std::vector<io::SequenceEntry>& entries,
                             const std::string& base_dir, const ExperimentConfig& cfg,
                             const std::string& modality,
                             const std::map<int, int>& labels);

/// Zips per-modality window tensors into multi-input samples for one fused
/// graph; window counts must agree across modalities.
ModalityData merge_for_early_fusion(const std::vector<ModalityData>& parts);

struct TrainedNet {
  GraphDef graph;
  train::TrainState state;
  std::vector<train::EpochLog> log;
};

/// Fixed-width fit or width curriculum, depending on the config.
TrainedNet train_net(const ModalityData& data, const ExperimentConfig& cfg,
                     const std::string& arch, const std::string& modality);

/// Per-window softmax distributions of one video.
std::vector<classify::ScoreVector> window_scores(const GraphDef& g, ParamSet<float>& params,
                                                 const Video& video,
                                                 const std::string& modality);

/// Video verdict from its window scores ("sm-prod" or "sm-vote"; the vote
/// variant reports vote fractions with a product tie-break blended in).
classify::ScoreVector aggregate_video(const std::vector<classify::ScoreVector>& windows,
                                      const std::string& aggregation);

/// Mean window signature of each video.
std::vector<classify::GaitSignature> video_signatures(const GraphDef& g,
                                                      ParamSet<float>& params,
                                                      const std::vector<Video>& videos,
                                                      const std::string& modality);

struct ExperimentResult {
  eval::EvalReport report;
  std::string report_csv;   // written artifact paths
  std::string report_text;
  std::map<std::string, std::string> checkpoints;  // modality (or "fused") -> path
  classify::FusionWeights weights;                 // weights used, when fusing by sum
};

/// The full pipeline: ingest every modality, train, score the probe videos,
/// fuse, evaluate, and persist checkpoints / score files / reports under
/// cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace gait::cli
