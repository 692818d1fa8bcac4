#pragma once

#include <map>
#include <string>
#include <vector>

#include "gait/layers.hpp"
#include "gait/rng.hpp"
#include "gait/tensor.hpp"

namespace gait {

/// Scalar-free network description: a DAG of LayerSpecs in topological
/// order. Parameters live separately in a ParamSet so the same graph can be
/// instantiated in 32-bit (training) or 64-bit (gradient oracle) precision.
struct Node {
  LayerSpec spec;
  std::vector<int> inputs;  // node ids, each < this node's id
};

struct GraphDef {
  std::vector<Node> nodes;
  std::vector<int> input_nodes;  // binding order for forward()

  int output_node = -1;     // softmax scores
  int logits_node = -1;     // pre-softmax layer the loss attaches to
  int signature_node = -1;  // feature layer read out as the gait signature

  /// Named probe points ("P1".."P5"). Usually one node; the two-branch
  /// volumetric net exposes both branch activations at P1..P3, which a
  /// fusion graph concatenates itself.
  std::map<std::string, std::vector<int>> taps;

  std::string arch_id;
  int classes = 0;
  std::string modality;
  double width = 1.0;
  std::vector<std::string> warnings;  // e.g. rounded-up filter counts

  /// Appends a node and returns its id. Input nodes self-register.
  int add(LayerSpec spec, std::vector<int> inputs);

  const Node& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
  int find(const std::string& name) const;  // -1 when absent

  /// Structural validation: unique names, arity per kind, topo order,
  /// metadata ids in range. Throws ConfigError.
  void check() const;
};

/// Per-sample output shape of every node. Throws on any inconsistency.
std::vector<Shape> infer_shapes(const GraphDef& g);

std::vector<ParamDesc> all_param_descs(const GraphDef& g);
std::int64_t param_count(const GraphDef& g);

/// Human-readable layer table (name, kind, output shape, parameter count).
std::string describe(const GraphDef& g);

bool param_trainable(const std::string& name);
bool param_decays(const std::string& name);

template <typename S>
struct ParamSet {
  std::map<std::string, Tensor<S>> t;  // ordered: deterministic enumeration

  Tensor<S>& at(const std::string& k);
  const Tensor<S>& at(const std::string& k) const;
  bool has(const std::string& k) const { return t.count(k) != 0; }
};

/// He-uniform fan-in init for conv/FC weights; zero biases; identity batch
/// norm. Fills tensors in node order from the given stream.
template <typename S>
ParamSet<S> init_params(const GraphDef& g, Rng& rng);

/// Zero tensors for each trainable parameter, ready to accumulate into.
template <typename S>
ParamSet<S> zero_grads_like(const ParamSet<S>& params);

enum class Mode { Train, Eval };

/// Everything forward() computed that backward() or the caller may need.
template <typename S>
struct Trace {
  Mode mode = Mode::Eval;
  std::vector<Tensor<S>> out;
  std::vector<Tensor<int>> pool_ix;            // max pool argmax
  std::vector<Tensor<S>> aux1;                 // dropout mask / bn mean
  std::vector<Tensor<S>> aux2;                 // bn inverse std
};

struct ForwardOptions {
  Mode mode = Mode::Eval;
  Rng* rng = nullptr;        // required when training with dropout
  bool check_finite = true;  // NaN/Inf after any node is a NumericError
};

/// params is mutable because train-mode batch norm updates running stats.
template <typename S>
void forward(const GraphDef& g, ParamSet<S>& params,
             const std::vector<const Tensor<S>*>& inputs, const ForwardOptions& opt,
             Trace<S>& trace);

/// Backpropagates d(scalar)/d(out of node `from`) through the graph,
/// accumulating parameter gradients. Optionally reports input gradients.
template <typename S>
void backward(const GraphDef& g, const ParamSet<S>& params, const Trace<S>& trace, int from,
              const Tensor<S>& dfrom, ParamSet<S>& grads,
              std::vector<Tensor<S>>* dinputs = nullptr);

/// Eval-mode softmax scores (N, classes) for a batch.
template <typename S>
Tensor<S> run_scores(const GraphDef& g, ParamSet<S>& params,
                     const std::vector<const Tensor<S>*>& inputs);

/// Eval-mode signature features flattened to (N, D).
template <typename S>
Tensor<S> run_signatures(const GraphDef& g, ParamSet<S>& params,
                         const std::vector<const Tensor<S>*>& inputs);

}  // namespace gait
