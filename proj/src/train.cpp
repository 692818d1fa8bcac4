#include "gait/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "gait/errors.hpp"
#include "gait/ops.hpp"
#include "gait/zoo.hpp"

namespace gait::train {

std::vector<Stage> default_curriculum() {
  return {{0.25, 0.0, 0.9}, {0.5, 0.1, 0.9}, {0.75, 0.1, 0.9}, {1.0, 0.4, 0.95}};
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  if (batch < 2) throw ConfigError("batch size must be at least 2");
  if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
  if (!(lr_decay_factor > 1.0)) throw ConfigError("lr decay factor must exceed 1");
  if (plateau_window < 1) throw ConfigError("plateau window must be positive");
  if (plateau_epsilon < 0.0) throw ConfigError("plateau epsilon must be non-negative");
  if (joint_epochs < 0) throw ConfigError("joint epochs must be non-negative");
  for (const Stage& s : curriculum) {
    if (!(s.width > 0.0) || s.width > 1.0) throw ConfigError("stage width must be in (0, 1]");
    if (s.dropout < 0.0 || s.dropout >= 1.0) throw ConfigError("stage dropout must be in [0, 1)");
    if (s.momentum < 0.0 || s.momentum >= 1.0) throw ConfigError("stage momentum must be in [0, 1)");
  }
}

bool PlateauState::observe(double val_error, const TrainConfig& cfg) {
  if (std::isinf(best)) {
    best = val_error;  // first measurement seeds the reference
    since = 1;
    return false;
  }
  if (val_error < best - cfg.plateau_epsilon) {
    best = val_error;
    since = 0;
    return false;
  }
  if (++since >= cfg.plateau_window) {
    since = 0;  // one decay per window, then wait for a fresh one
    return true;
  }
  return false;
}

double plateau_lr(const std::vector<double>& history, double lr, const TrainConfig& cfg) {
  if (history.empty()) throw ConfigError("plateau rule needs at least one measurement");
  PlateauState st;
  for (double e : history)
    if (st.observe(e, cfg)) lr /= cfg.lr_decay_factor;
  return lr;
}

void Dataset::add(TensorF x, int label) {
  samples.push_back({std::move(x)});
  labels.push_back(label);
}

int class_count(const Dataset& d) {
  int c = 0;
  for (int l : d.labels) {
    if (l < 0) throw ConfigError("negative class label");
    c = std::max(c, l + 1);
  }
  return c;
}

std::vector<int> balanced_order(const std::vector<int>& labels, Rng& rng) {
  if (labels.empty()) throw ConfigError("cannot sample from an empty dataset");
  int classes = 0;
  for (int l : labels) {
    if (l < 0) throw ConfigError("negative class label");
    classes = std::max(classes, l + 1);
  }
  std::vector<std::vector<int>> queues(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i)
    queues[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
  for (auto& q : queues) {
    if (q.empty()) throw ConfigError("a class has no training samples");
    rng.shuffle(q);
  }
  std::vector<int> order;
  order.reserve(labels.size());
  std::vector<std::size_t> heads(queues.size(), 0);
  bool any = true;
  while (any) {
    any = false;
    for (std::size_t c = 0; c < queues.size(); ++c) {
      if (heads[c] < queues[c].size()) {
        order.push_back(queues[c][heads[c]++]);
        any = true;
      }
    }
  }
  return order;
}

Batch stack_batch(const Dataset& d, const std::vector<int>& indices) {
  if (indices.empty()) throw ConfigError("empty batch");
  const std::size_t n_inputs = d.samples.at(static_cast<std::size_t>(indices[0])).size();
  Batch b;
  b.labels.reserve(indices.size());
  for (std::size_t in = 0; in < n_inputs; ++in) {
    const TensorF& first = d.samples[static_cast<std::size_t>(indices[0])][in];
    Shape s = first.shape();
    s.insert(s.begin(), static_cast<int>(indices.size()));
    TensorF stacked(s);
    const std::int64_t stride = first.numel();
    for (std::size_t r = 0; r < indices.size(); ++r) {
      const TensorF& x = d.samples.at(static_cast<std::size_t>(indices[r])).at(in);
      if (x.shape() != first.shape()) throw ConfigError("ragged sample shapes in batch");
      std::copy(x.data(), x.data() + stride, stacked.data() + static_cast<std::int64_t>(r) * stride);
    }
    b.inputs.push_back(std::move(stacked));
  }
  for (int ix : indices) b.labels.push_back(d.labels.at(static_cast<std::size_t>(ix)));
  return b;
}

template <typename S>
TrainStateT<S> init_state(const GraphDef& g, const TrainConfig& cfg) {
  cfg.validate();
  TrainStateT<S> st;
  st.rng = Rng(cfg.seed);
  st.params = init_params<S>(g, st.rng);
  st.velocity = zero_grads_like(st.params);
  st.lr = cfg.lr;
  return st;
}

template TrainStateT<float> init_state<float>(const GraphDef&, const TrainConfig&);
template TrainStateT<double> init_state<double>(const GraphDef&, const TrainConfig&);

template <typename S>
double sgd_step(const GraphDef& g, TrainStateT<S>& st, const Batch& batch,
                const TrainConfig& cfg) {
  if (batch.labels.empty()) throw ConfigError("empty batch");
  // snapshot the pieces forward() may mutate so a failed step rolls back
  const Rng rng_before = st.rng;
  ParamSet<S> stats;
  for (const auto& [name, t] : st.params.t)
    if (!param_trainable(name)) stats.t.emplace(name, t);

  try {
    std::vector<const Tensor<S>*> ins;
    ins.reserve(batch.inputs.size());
    std::vector<Tensor<S>> converted;
    if constexpr (std::is_same_v<S, float>) {
      for (const TensorF& x : batch.inputs) ins.push_back(&x);
    } else {
      converted.reserve(batch.inputs.size());
      for (const TensorF& x : batch.inputs) converted.push_back(x.template cast<S>());
      for (const Tensor<S>& x : converted) ins.push_back(&x);
    }

    ForwardOptions opt;
    opt.mode = Mode::Train;
    opt.rng = &st.rng;
    Trace<S> tr;
    forward(g, st.params, ins, opt, tr);

    Tensor<S> dlogits;
    const double loss = ops::softmax_cross_entropy<S>(
        tr.out[static_cast<std::size_t>(g.logits_node)], batch.labels, &dlogits);

    ParamSet<S> grads = zero_grads_like(st.params);
    backward(g, st.params, tr, g.logits_node, dlogits, grads);
    for (const auto& [name, grad] : grads.t)
      if (!grad.all_finite())
        throw NumericError("non-finite gradient for '" + name + "'; step aborted");

    for (auto& [name, v] : st.velocity.t) {
      const Tensor<S>& grad = grads.at(name);
      Tensor<S>& theta = st.params.at(name);
      const S gamma = static_cast<S>(cfg.momentum);
      const S alpha = static_cast<S>(st.lr);
      const S lambda = param_decays(name) ? static_cast<S>(cfg.weight_decay) : S(0);
      for (std::int64_t i = 0; i < v.numel(); ++i) {
        v[i] = gamma * v[i] + alpha * (grad[i] + lambda * theta[i]);
        theta[i] -= v[i];
      }
    }
    ++st.step;
    return loss;
  } catch (...) {
    st.rng = rng_before;
    for (const auto& [name, t] : stats.t) st.params.at(name) = t;
    throw;
  }
}

template double sgd_step<float>(const GraphDef&, TrainStateT<float>&, const Batch&,
                                const TrainConfig&);
template double sgd_step<double>(const GraphDef&, TrainStateT<double>&, const Batch&,
                                 const TrainConfig&);

double classification_error(const GraphDef& g, ParamSet<float>& params, const Dataset& data,
                            int batch) {
  if (data.size() == 0) throw ConfigError("cannot evaluate on an empty dataset");
  int wrong = 0;
  for (int at = 0; at < data.size(); at += batch) {
    std::vector<int> ixs;
    for (int i = at; i < std::min(at + batch, data.size()); ++i) ixs.push_back(i);
    const Batch b = stack_batch(data, ixs);
    std::vector<const TensorF*> ins;
    for (const TensorF& x : b.inputs) ins.push_back(&x);
    const TensorF scores = run_scores(g, params, ins);
    const int classes = scores.dim(1);
    for (std::size_t r = 0; r < ixs.size(); ++r) {
      int arg = 0;
      for (int c = 1; c < classes; ++c)
        if (scores.at(static_cast<int>(r), c) > scores.at(static_cast<int>(r), arg)) arg = c;
      if (arg != b.labels[r]) ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

void fit(const GraphDef& g, TrainState& st, const Dataset& train_set, const Dataset& val_set,
         const TrainConfig& cfg, std::vector<EpochLog>* log) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("empty training set");
  while (st.epoch < cfg.max_epochs) {
    const std::vector<int> order = balanced_order(train_set.labels, st.rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(at + static_cast<std::size_t>(cfg.batch), order.size());
      if (end - at < 2) break;  // a trailing singleton can't batch-normalize
      const std::vector<int> ixs(order.begin() + static_cast<std::ptrdiff_t>(at),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
      loss_sum += sgd_step(g, st, stack_batch(train_set, ixs), cfg);
      ++steps;
    }
    EpochLog e;
    e.epoch = st.epoch;
    e.train_loss = steps > 0 ? loss_sum / steps : 0.0;
    if (val_set.size() > 0) {
      e.val_error = classification_error(g, st.params, val_set, cfg.batch);
      if (st.plateau.observe(e.val_error, cfg)) st.lr /= cfg.lr_decay_factor;
    }
    e.lr = st.lr;
    ++st.epoch;
    if (log) log->push_back(e);
  }
}

void set_dropout(GraphDef& g, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  for (Node& n : g.nodes)
    if (n.spec.kind == LayerKind::Dropout) n.spec.rate = rate;
}

namespace {

// Copies src into dst over the overlapping leading hyper-slice.
void copy_slice(const TensorF& src, TensorF& dst) {
  if (src.rank() != dst.rank()) throw ConfigError("rank mismatch in warm start");
  const int r = src.rank();
  Shape lim(static_cast<std::size_t>(r));
  for (int d = 0; d < r; ++d) lim[static_cast<std::size_t>(d)] = std::min(src.dim(d), dst.dim(d));
  Shape ix(static_cast<std::size_t>(r), 0);
  while (true) {
    std::int64_t so = 0, do_ = 0;
    for (int d = 0; d < r; ++d) {
      so = so * src.dim(d) + ix[static_cast<std::size_t>(d)];
      do_ = do_ * dst.dim(d) + ix[static_cast<std::size_t>(d)];
    }
    dst[do_] = src[so];
    int d = r - 1;
    for (; d >= 0; --d) {
      if (++ix[static_cast<std::size_t>(d)] < lim[static_cast<std::size_t>(d)]) break;
      ix[static_cast<std::size_t>(d)] = 0;
    }
    if (d < 0) break;
  }
}

}  // namespace

ParamSet<float> warm_start(const GraphDef& to, const GraphDef& from,
                           const ParamSet<float>& learned, Rng& rng) {
  (void)from;
  ParamSet<float> fresh = init_params<float>(to, rng);
  for (auto& [name, dst] : fresh.t) {
    const auto it = learned.t.find(name);
    if (it == learned.t.end()) continue;
    copy_slice(it->second, dst);
  }
  return fresh;
}

CurriculumResult curriculum_train(const std::string& arch, int classes,
                                  const std::string& modality, const Dataset& train_set,
                                  const Dataset& val_set, const TrainConfig& cfg) {
  cfg.validate();
  const bool residual = arch.rfind("resnet", 0) == 0;
  std::vector<Stage> stages;
  if (residual) {
    stages = {{1.0, cfg.dropout, cfg.momentum}};  // trained from scratch in one stage
  } else {
    stages = cfg.curriculum.empty() ? default_curriculum() : cfg.curriculum;
    for (std::size_t i = 1; i < stages.size(); ++i)
      if (!(stages[i].width > stages[i - 1].width))
        throw ConfigError("curriculum stage widths must increase");
  }

  CurriculumResult res;
  GraphDef prev_graph;
  ParamSet<float> prev_params;
  Rng grow_rng = Rng(cfg.seed).fork(0x67726f77);  // fresh-filter stream

  for (std::size_t k = 0; k < stages.size(); ++k) {
    const Stage& stage = stages[k];
    GraphDef g = zoo::build(arch, classes, stage.width, modality);
    set_dropout(g, stage.dropout);

    TrainConfig stage_cfg = cfg;
    stage_cfg.momentum = stage.momentum;
    stage_cfg.dropout = stage.dropout;

    TrainState st = init_state<float>(g, stage_cfg);
    if (k > 0) {
      st.params = warm_start(g, prev_graph, prev_params, grow_rng);
      ++res.transfers;
    }
    fit(g, st, train_set, val_set, stage_cfg, &res.log);

    if (k + 1 == stages.size()) {
      if (stage_cfg.joint_epochs > 0) {
        Dataset joint = train_set;
        for (int i = 0; i < val_set.size(); ++i) {
          joint.samples.push_back(val_set.samples[static_cast<std::size_t>(i)]);
          joint.labels.push_back(val_set.labels[static_cast<std::size_t>(i)]);
        }
        TrainConfig joint_cfg = stage_cfg;
        joint_cfg.max_epochs = st.epoch + stage_cfg.joint_epochs;
        const Dataset no_val;
        fit(g, st, joint, no_val, joint_cfg, &res.log);  // final LR carries over
      }
      res.graph = std::move(g);
      res.state = std::move(st);
    } else {
      prev_graph = std::move(g);
      prev_params = std::move(st.params);
    }
  }
  return res;
}

namespace {

TensorF pack_u64(std::uint64_t v) {
  TensorF t({4});
  for (int i = 0; i < 4; ++i) t[i] = static_cast<float>((v >> (16 * i)) & 0xffffULL);
  return t;
}

std::uint64_t unpack_u64(const TensorF& t) {
  if (t.numel() != 4) throw IoError("malformed 64-bit state block");
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const float limb = t[i];
    if (limb < 0.0f || limb > 65535.0f || limb != std::floor(limb))
      throw IoError("malformed 64-bit state block");
    v |= static_cast<std::uint64_t>(limb) << (16 * i);
  }
  return v;
}

TensorF pack_f64(double v) { return pack_u64(std::bit_cast<std::uint64_t>(v)); }
double unpack_f64(const TensorF& t) { return std::bit_cast<double>(unpack_u64(t)); }

}  // namespace

io::Checkpoint encode_state(const TrainState& st, std::uint64_t config_hash) {
  io::Checkpoint c;
  c.config_hash = config_hash;
  for (const auto& [name, t] : st.params.t) c.blocks.emplace(name, t);
  for (const auto& [name, t] : st.velocity.t) c.blocks.emplace("opt/v/" + name, t);
  c.blocks.emplace("state/epoch", pack_u64(static_cast<std::uint64_t>(st.epoch)));
  c.blocks.emplace("state/step", pack_u64(static_cast<std::uint64_t>(st.step)));
  c.blocks.emplace("state/lr", pack_f64(st.lr));
  c.blocks.emplace("state/plateau_best", pack_f64(st.plateau.best));
  c.blocks.emplace("state/plateau_since", pack_u64(static_cast<std::uint64_t>(st.plateau.since)));
  c.blocks.emplace("state/rng_seed", pack_u64(st.rng.seed()));
  c.blocks.emplace("state/rng_calls", pack_u64(st.rng.calls()));
  return c;
}

TrainState decode_state(const io::Checkpoint& c, const GraphDef& g) {
  const auto block = [&](const std::string& name) -> const TensorF& {
    const auto it = c.blocks.find(name);
    if (it == c.blocks.end()) throw IoError("checkpoint is missing block '" + name + "'");
    return it->second;
  };
  TrainState st;
  for (const ParamDesc& d : all_param_descs(g)) {
    const TensorF& t = block(d.name);
    if (t.shape() != d.shape)
      throw IoError("checkpoint block '" + d.name + "' has shape " + shape_str(t.shape()) +
                    ", graph wants " + shape_str(d.shape));
    st.params.t.emplace(d.name, t);
    if (d.trainable) st.velocity.t.emplace(d.name, block("opt/v/" + d.name));
  }
  st.epoch = static_cast<int>(unpack_u64(block("state/epoch")));
  st.step = static_cast<std::int64_t>(unpack_u64(block("state/step")));
  st.lr = unpack_f64(block("state/lr"));
  st.plateau.best = unpack_f64(block("state/plateau_best"));
  st.plateau.since = static_cast<int>(unpack_u64(block("state/plateau_since")));
  st.rng = Rng::restore(unpack_u64(block("state/rng_seed")), unpack_u64(block("state/rng_calls")));
  return st;
}

void save_state(const std::string& path, const TrainState& st, std::uint64_t config_hash) {
  io::save_checkpoint(path, encode_state(st, config_hash));
}

TrainState load_state(const std::string& path, const GraphDef& g, std::uint64_t expected_hash) {
  const io::Checkpoint c = io::load_checkpoint(path);
  if (expected_hash != 0 && c.config_hash != expected_hash)
    throw IoError(path + ": checkpoint was trained under a different configuration");
  return decode_state(c, g);
}

}  // namespace gait::train
