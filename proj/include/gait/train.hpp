#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gait/graph.hpp"
#include "gait/io.hpp"
#include "gait/rng.hpp"
#include "gait/tensor.hpp"

/// Minibatch SGD with momentum and weight decay, balanced class sampling,
/// plateau learning-rate decay, width curriculum with warm-started stages,
/// and bit-exact checkpoint/resume.
namespace gait::train {

/// One curriculum stage: train a net at this width/dropout/momentum, then
/// warm-start the next stage from it.
struct Stage {
  double width = 1.0;
  double dropout = 0.4;
  double momentum = 0.9;
};

/// Width quarters with dropout eased in and momentum raised for the final
/// full-width stage.
std::vector<Stage> default_curriculum();

struct TrainConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double dropout = 0.4;
  int batch = 150;
  int max_epochs = 20;
  double lr_decay_factor = 10.0;
  int plateau_window = 3;
  double plateau_epsilon = 1e-3;
  int joint_epochs = 5;  // extra train+val epochs after the last stage
  std::uint64_t seed = 1;
  std::vector<Stage> curriculum;  // empty = default_curriculum()

  void validate() const;
};

/// Plateau rule: decay once per window of consecutive evaluations in which
/// the best error never improved by more than epsilon.
struct PlateauState {
  double best = std::numeric_limits<double>::infinity();
  int since = 0;  // evaluations since the last improvement or decay

  /// Feeds one validation error; true when a decay should fire now.
  bool observe(double val_error, const TrainConfig& cfg);
};

/// Replays a validation-error history through the plateau rule and returns
/// the resulting learning rate.
double plateau_lr(const std::vector<double>& history, double lr, const TrainConfig& cfg);

/// Labeled samples; each sample carries one tensor per graph input.
struct Dataset {
  std::vector<std::vector<TensorF>> samples;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  void add(TensorF x, int label);  // single-input convenience
};

int class_count(const Dataset& d);

/// Full-epoch permutation built by round-robin over shuffled per-class
/// queues: any batch-sized slice has near-uniform class counts, and every
/// sample appears exactly once. Throws when a class id in range is empty.
std::vector<int> balanced_order(const std::vector<int>& labels, Rng& rng);

/// Stacks dataset rows into one batched tensor per graph input.
struct Batch {
  std::vector<TensorF> inputs;
  std::vector<int> labels;
};
Batch stack_batch(const Dataset& d, const std::vector<int>& indices);

template <typename S>
struct TrainStateT {
  ParamSet<S> params;
  ParamSet<S> velocity;  // one slot per trainable parameter
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0.0;
  PlateauState plateau;
  Rng rng;
};
using TrainState = TrainStateT<float>;

template <typename S>
TrainStateT<S> init_state(const GraphDef& g, const TrainConfig& cfg);

/// One momentum-SGD update on a batch: v <- momentum*v + lr*(mean grad +
/// decay*theta), theta <- theta - v; decay applies to conv/FC weights only.
/// Returns the batch loss. A non-finite gradient aborts the step with the
/// offending parameter named and the state rolled back.
template <typename S>
double sgd_step(const GraphDef& g, TrainStateT<S>& st, const Batch& batch,
                const TrainConfig& cfg);

/// Eval-mode top-1 error fraction.
double classification_error(const GraphDef& g, ParamSet<float>& params, const Dataset& data,
                            int batch);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_error = 1.0;
  double lr = 0.0;
};

/// Runs epochs until cfg.max_epochs, updating the learning rate on
/// validation plateaus. An empty validation set skips the plateau rule.
void fit(const GraphDef& g, TrainState& st, const Dataset& train_set, const Dataset& val_set,
         const TrainConfig& cfg, std::vector<EpochLog>* log = nullptr);

/// Rewrites the keep-probability of every dropout layer in place.
void set_dropout(GraphDef& g, double rate);

/// Fresh parameters for `to`, with every parameter shared by name copied
/// from `learned` over the overlapping leading slice (grown filters keep
/// their fresh values).
ParamSet<float> warm_start(const GraphDef& to, const GraphDef& from,
                           const ParamSet<float>& learned, Rng& rng);

struct CurriculumResult {
  GraphDef graph;
  TrainState state;
  int transfers = 0;  // warm starts performed
  std::vector<EpochLog> log;
};

/// Width-curriculum training for the plain nets; residual nets train in a
/// single full-width stage. Ends with joint train+validation epochs at the
/// final learning rate.
CurriculumResult curriculum_train(const std::string& arch, int classes,
                                  const std::string& modality, const Dataset& train_set,
                                  const Dataset& val_set, const TrainConfig& cfg);

/// Checkpoint packing: parameters as-is, velocity under "opt/v/", counters
/// and RNG position under "state/" (64-bit words as 16-bit limbs so the
/// 32-bit block payload stays lossless).
io::Checkpoint encode_state(const TrainState& st, std::uint64_t config_hash);
TrainState decode_state(const io::Checkpoint& c, const GraphDef& g);

void save_state(const std::string& path, const TrainState& st, std::uint64_t config_hash);
/// expected_hash 0 skips the config-hash comparison.
TrainState load_state(const std::string& path, const GraphDef& g, std::uint64_t expected_hash);

}  // namespace gait::train
