#include "gait/graph.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "gait/errors.hpp"
#include "gait/ops.hpp"

namespace gait {

int GraphDef::add(LayerSpec spec, std::vector<int> inputs) {
  validate_spec(spec);
  const int id = static_cast<int>(nodes.size());
  for (int in : inputs)
    if (in < 0 || in >= id)
      throw ConfigError("layer '" + spec.name + "' references node " + std::to_string(in) +
                        " out of order");
  if (spec.kind == LayerKind::Input) input_nodes.push_back(id);
  nodes.push_back(Node{std::move(spec), std::move(inputs)});
  return id;
}

int GraphDef::find(const std::string& name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].spec.name == name) return static_cast<int>(i);
  return -1;
}

void GraphDef::check() const {
  std::set<std::string> names;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    validate_spec(n.spec);
    if (!names.insert(n.spec.name).second)
      throw ConfigError("duplicate layer name '" + n.spec.name + "'");
    for (int in : n.inputs)
      if (in < 0 || in >= static_cast<int>(i))
        throw ConfigError("layer '" + n.spec.name + "' breaks topological order");
    if (n.spec.kind == LayerKind::Input && !n.inputs.empty())
      throw ConfigError("input layer '" + n.spec.name + "' must not have inputs");
  }
  const auto in_range = [&](int id) { return id >= -1 && id < static_cast<int>(nodes.size()); };
  if (!in_range(output_node) || !in_range(logits_node) || !in_range(signature_node))
    throw ConfigError("graph metadata references a node out of range");
  for (const auto& [tap, ids] : taps) {
    if (ids.empty()) throw ConfigError("tap '" + tap + "' is empty");
    for (int id : ids)
      if (id < 0 || id >= static_cast<int>(nodes.size()))
        throw ConfigError("tap '" + tap + "' references a node out of range");
  }
  if (input_nodes.empty()) throw ConfigError("graph has no input layer");
  infer_shapes(*this);  // totality: every node must shape-check
}

std::vector<Shape> infer_shapes(const GraphDef& g) {
  std::vector<Shape> shapes(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    std::vector<Shape> in;
    in.reserve(g.nodes[i].inputs.size());
    for (int id : g.nodes[i].inputs) in.push_back(shapes[static_cast<std::size_t>(id)]);
    shapes[i] = infer_shape(g.nodes[i].spec, in);
  }
  return shapes;
}

std::vector<ParamDesc> all_param_descs(const GraphDef& g) {
  const auto shapes = infer_shapes(g);
  std::vector<ParamDesc> out;
  for (const Node& n : g.nodes) {
    std::vector<Shape> in;
    for (int id : n.inputs) in.push_back(shapes[static_cast<std::size_t>(id)]);
    for (auto& d : param_descs(n.spec, in)) out.push_back(std::move(d));
  }
  return out;
}

std::int64_t param_count(const GraphDef& g) {
  std::int64_t total = 0;
  for (const auto& d : all_param_descs(g))
    if (d.trainable) total += shape_numel(d.shape);
  return total;
}

std::string describe(const GraphDef& g) {
  const auto shapes = infer_shapes(g);
  std::ostringstream os;
  os << g.arch_id << " (classes=" << g.classes << ", width=" << g.width << ")\n";
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Node& n = g.nodes[i];
    std::vector<Shape> in;
    for (int id : n.inputs) in.push_back(shapes[static_cast<std::size_t>(id)]);
    std::int64_t pc = 0;
    for (const auto& d : param_descs(n.spec, in))
      if (d.trainable) pc += shape_numel(d.shape);
    os << "  " << i << "  " << n.spec.name << "  " << kind_name(n.spec.kind) << "  "
       << shape_str(shapes[i]);
    if (pc) os << "  params=" << pc;
    os << "\n";
  }
  os << "  total trainable parameters: " << param_count(g) << "\n";
  return os.str();
}

namespace {

bool name_has_suffix(const std::string& name, const char* suffix) {
  const std::string s(suffix);
  return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
}

}  // namespace

bool param_trainable(const std::string& name) {
  return !name_has_suffix(name, ".run_mean") && !name_has_suffix(name, ".run_var");
}

bool param_decays(const std::string& name) { return name_has_suffix(name, ".w"); }

template <typename S>
Tensor<S>& ParamSet<S>::at(const std::string& k) {
  auto it = t.find(k);
  if (it == t.end()) throw ConfigError("missing parameter '" + k + "'");
  return it->second;
}

template <typename S>
const Tensor<S>& ParamSet<S>::at(const std::string& k) const {
  auto it = t.find(k);
  if (it == t.end()) throw ConfigError("missing parameter '" + k + "'");
  return it->second;
}

template <typename S>
ParamSet<S> init_params(const GraphDef& g, Rng& rng) {
  const auto shapes = infer_shapes(g);
  ParamSet<S> p;
  for (const Node& n : g.nodes) {
    std::vector<Shape> in;
    for (int id : n.inputs) in.push_back(shapes[static_cast<std::size_t>(id)]);
    for (const auto& d : param_descs(n.spec, in)) {
      Tensor<S> t(d.shape);
      if (param_decays(d.name)) {
        // He-uniform: U(-sqrt(6/fan_in), +sqrt(6/fan_in)); fan_in is the
        // weight's receptive size (all dims but the last).
        const std::int64_t fan_in = shape_numel(d.shape) / d.shape.back();
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::int64_t i = 0; i < t.numel(); ++i)
          t[i] = static_cast<S>(rng.next_range(-limit, limit));
      } else if (name_has_suffix(d.name, ".gamma") || name_has_suffix(d.name, ".run_var")) {
        t.fill(S(1));
      }
      p.t.emplace(d.name, std::move(t));
    }
  }
  return p;
}

template <typename S>
ParamSet<S> zero_grads_like(const ParamSet<S>& params) {
  ParamSet<S> g;
  for (const auto& [k, v] : params.t)
    if (param_trainable(k)) g.t.emplace(k, Tensor<S>(v.shape()));
  return g;
}

namespace {

template <typename S>
void add_into(Tensor<S>& acc, const Tensor<S>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  if (acc.shape() != g.shape())
    throw ConfigError("gradient shape mismatch: " + shape_str(acc.shape()) + " vs " +
                      shape_str(g.shape()));
  for (std::int64_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
}

Shape with_batch(int n, const Shape& per_sample) {
  Shape s;
  s.reserve(per_sample.size() + 1);
  s.push_back(n);
  for (int d : per_sample) s.push_back(d);
  return s;
}

}  // namespace

template <typename S>
void forward(const GraphDef& g, ParamSet<S>& params,
             const std::vector<const Tensor<S>*>& inputs, const ForwardOptions& opt,
             Trace<S>& trace) {
  if (inputs.size() != g.input_nodes.size())
    throw ConfigError("graph expects " + std::to_string(g.input_nodes.size()) +
                      " inputs, got " + std::to_string(inputs.size()));
  const auto shapes = infer_shapes(g);
  const std::size_t nn = g.nodes.size();
  trace.mode = opt.mode;
  trace.out.assign(nn, Tensor<S>());
  trace.pool_ix.assign(nn, Tensor<int>());
  trace.aux1.assign(nn, Tensor<S>());
  trace.aux2.assign(nn, Tensor<S>());

  int batch = -1;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const int id = g.input_nodes[b];
    const Shape want = shapes[static_cast<std::size_t>(id)];
    const Tensor<S>& x = *inputs[b];
    if (x.rank() != static_cast<int>(want.size()) + 1)
      throw ConfigError("input '" + g.node(id).spec.name + "' expects per-sample shape " +
                        shape_str(want) + ", got tensor " + shape_str(x.shape()));
    for (std::size_t d = 0; d < want.size(); ++d)
      if (x.shape()[d + 1] != want[d])
        throw ConfigError("input '" + g.node(id).spec.name + "' expects per-sample shape " +
                          shape_str(want) + ", got tensor " + shape_str(x.shape()));
    if (batch == -1) batch = x.dim(0);
    if (x.dim(0) != batch) throw ConfigError("inputs disagree on batch size");
  }
  if (batch < 1) throw ConfigError("empty batch");

  for (std::size_t i = 0; i < nn; ++i) {
    const Node& n = g.nodes[i];
    const LayerSpec& s = n.spec;
    const auto in = [&](std::size_t k) -> const Tensor<S>& {
      return trace.out[static_cast<std::size_t>(n.inputs[k])];
    };
    Tensor<S>& out = trace.out[i];
    switch (s.kind) {
      case LayerKind::Input: {
        std::size_t slot = 0;
        while (g.input_nodes[slot] != static_cast<int>(i)) ++slot;
        out = *inputs[slot];
        break;
      }
      case LayerKind::Reshape:
        out = in(0).reshaped(with_batch(batch, s.dims));
        break;
      case LayerKind::ChannelSelect:
        out = ops::take_channels(in(0), s.sel_start, s.sel_step, s.sel_count);
        break;
      case LayerKind::Conv2D:
        out = ops::conv2d(in(0), params.at(s.name + ".w"), params.at(s.name + ".b"), s.sh, s.sw,
                          s.ph, s.pw);
        break;
      case LayerKind::Conv3D:
        out = ops::conv3d(in(0), params.at(s.name + ".w"), params.at(s.name + ".b"), s.st, s.sh,
                          s.sw, s.pt, s.ph, s.pw);
        break;
      case LayerKind::MaxPool2D:
        out = ops::maxpool2d(in(0), s.kh, s.kw, s.sh, s.sw, trace.pool_ix[i]);
        break;
      case LayerKind::MaxPool3D:
        out = ops::maxpool3d(in(0), s.kt, s.kh, s.kw, s.st, s.sh, s.sw, trace.pool_ix[i]);
        break;
      case LayerKind::AvgPool2D:
        out = ops::avgpool2d(in(0), s.kh, s.kw, s.sh, s.sw);
        break;
      case LayerKind::LRN:
        out = ops::lrn(in(0), s.lrn_size, s.lrn_alpha, s.lrn_beta, s.lrn_k);
        break;
      case LayerKind::BatchNorm:
        if (opt.mode == Mode::Train)
          out = ops::batchnorm_train(in(0), params.at(s.name + ".gamma"),
                                     params.at(s.name + ".beta"),
                                     params.at(s.name + ".run_mean"),
                                     params.at(s.name + ".run_var"), s.bn_momentum, s.bn_eps,
                                     trace.aux1[i], trace.aux2[i]);
        else
          out = ops::batchnorm_eval(in(0), params.at(s.name + ".gamma"),
                                    params.at(s.name + ".beta"),
                                    params.at(s.name + ".run_mean"),
                                    params.at(s.name + ".run_var"), s.bn_eps);
        break;
      case LayerKind::FullyConnected:
        out = ops::fully_connected(in(0), params.at(s.name + ".w"), params.at(s.name + ".b"));
        break;
      case LayerKind::ReLU:
        out = ops::relu(in(0));
        break;
      case LayerKind::Dropout:
        if (opt.mode == Mode::Train && s.rate > 0.0) {
          if (!opt.rng)
            throw ConfigError("dropout layer '" + s.name + "' needs a random stream in training");
          out = ops::dropout_train(in(0), s.rate, *opt.rng, trace.aux1[i]);
        } else {
          out = in(0);
        }
        break;
      case LayerKind::Softmax:
        out = ops::softmax(in(0));
        break;
      case LayerKind::Concat: {
        std::vector<const Tensor<S>*> xs;
        xs.reserve(n.inputs.size());
        for (std::size_t k = 0; k < n.inputs.size(); ++k) xs.push_back(&in(k));
        out = ops::concat_axis1(xs);
        break;
      }
      case LayerKind::Add:
        out = ops::add(in(0), in(1));
        break;
    }
    if (opt.check_finite && !out.all_finite())
      throw NumericError("non-finite values after layer '" + s.name + "' (" +
                         kind_name(s.kind) + ")");
  }
}

template <typename S>
void backward(const GraphDef& g, const ParamSet<S>& params, const Trace<S>& trace, int from,
              const Tensor<S>& dfrom, ParamSet<S>& grads, std::vector<Tensor<S>>* dinputs) {
  if (from < 0 || from >= static_cast<int>(g.nodes.size()))
    throw ConfigError("backward start node out of range");
  if (dfrom.shape() != trace.out[static_cast<std::size_t>(from)].shape())
    throw ConfigError("backward seed shape mismatch");
  std::vector<Tensor<S>> d(g.nodes.size());
  d[static_cast<std::size_t>(from)] = dfrom;
  if (dinputs) dinputs->assign(g.input_nodes.size(), Tensor<S>());

  const auto bump = [&](const std::string& key, const Tensor<S>& t) {
    add_into(grads.at(key), t);
  };

  for (int i = from; i >= 0; --i) {
    Tensor<S>& dy = d[static_cast<std::size_t>(i)];
    if (dy.empty()) continue;
    const Node& n = g.nodes[static_cast<std::size_t>(i)];
    const LayerSpec& s = n.spec;
    const auto x = [&](std::size_t k) -> const Tensor<S>& {
      return trace.out[static_cast<std::size_t>(n.inputs[k])];
    };
    const auto send = [&](std::size_t k, Tensor<S> grad) {
      add_into(d[static_cast<std::size_t>(n.inputs[k])], grad);
    };
    switch (s.kind) {
      case LayerKind::Input: {
        if (dinputs) {
          std::size_t slot = 0;
          while (g.input_nodes[slot] != i) ++slot;
          (*dinputs)[slot] = dy;
        }
        break;
      }
      case LayerKind::Reshape:
        send(0, dy.reshaped(x(0).shape()));
        break;
      case LayerKind::ChannelSelect:
        send(0, ops::take_channels_grad(dy, x(0).shape(), s.sel_start, s.sel_step, s.sel_count));
        break;
      case LayerKind::Conv2D: {
        Tensor<S> dx, dw, db;
        ops::conv2d_grad(x(0), params.at(s.name + ".w"), dy, s.sh, s.sw, s.ph, s.pw, dx, dw, db);
        bump(s.name + ".w", dw);
        bump(s.name + ".b", db);
        send(0, std::move(dx));
        break;
      }
      case LayerKind::Conv3D: {
        Tensor<S> dx, dw, db;
        ops::conv3d_grad(x(0), params.at(s.name + ".w"), dy, s.st, s.sh, s.sw, s.pt, s.ph, s.pw,
                         dx, dw, db);
        bump(s.name + ".w", dw);
        bump(s.name + ".b", db);
        send(0, std::move(dx));
        break;
      }
      case LayerKind::MaxPool2D:
        send(0, ops::maxpool2d_grad(dy, trace.pool_ix[static_cast<std::size_t>(i)],
                                    x(0).shape()));
        break;
      case LayerKind::MaxPool3D:
        send(0, ops::maxpool3d_grad(dy, trace.pool_ix[static_cast<std::size_t>(i)],
                                    x(0).shape()));
        break;
      case LayerKind::AvgPool2D:
        send(0, ops::avgpool2d_grad(dy, x(0).shape(), s.kh, s.kw, s.sh, s.sw));
        break;
      case LayerKind::LRN:
        send(0, ops::lrn_grad(x(0), dy, s.lrn_size, s.lrn_alpha, s.lrn_beta, s.lrn_k));
        break;
      case LayerKind::BatchNorm: {
        if (trace.mode != Mode::Train)
          throw ConfigError("batch-norm backward requires a training-mode trace");
        Tensor<S> dx, dgamma, dbeta;
        ops::batchnorm_grad(x(0), params.at(s.name + ".gamma"), dy,
                            trace.aux1[static_cast<std::size_t>(i)],
                            trace.aux2[static_cast<std::size_t>(i)], dx, dgamma, dbeta);
        bump(s.name + ".gamma", dgamma);
        bump(s.name + ".beta", dbeta);
        send(0, std::move(dx));
        break;
      }
      case LayerKind::FullyConnected: {
        Tensor<S> dx, dw, db;
        ops::fully_connected_grad(x(0), params.at(s.name + ".w"), dy, dx, dw, db);
        bump(s.name + ".w", dw);
        bump(s.name + ".b", db);
        send(0, std::move(dx));
        break;
      }
      case LayerKind::ReLU:
        send(0, ops::relu_grad(x(0), dy));
        break;
      case LayerKind::Dropout:
        if (trace.mode == Mode::Train && s.rate > 0.0)
          send(0, ops::dropout_grad(dy, trace.aux1[static_cast<std::size_t>(i)]));
        else
          send(0, dy);
        break;
      case LayerKind::Softmax:
        send(0, ops::softmax_grad(trace.out[static_cast<std::size_t>(i)], dy));
        break;
      case LayerKind::Concat: {
        std::vector<Shape> shapes;
        shapes.reserve(n.inputs.size());
        for (std::size_t k = 0; k < n.inputs.size(); ++k) shapes.push_back(x(k).shape());
        auto parts = ops::concat_axis1_grad(dy, shapes);
        for (std::size_t k = 0; k < parts.size(); ++k) send(k, std::move(parts[k]));
        break;
      }
      case LayerKind::Add:
        send(0, dy);
        send(1, dy);
        break;
    }
    if (i != from) dy = Tensor<S>();  // free as we go; seed left intact
  }
}

template <typename S>
Tensor<S> run_scores(const GraphDef& g, ParamSet<S>& params,
                     const std::vector<const Tensor<S>*>& inputs) {
  if (g.output_node < 0) throw ConfigError("graph has no score output");
  Trace<S> trace;
  forward(g, params, inputs, ForwardOptions{}, trace);
  return trace.out[static_cast<std::size_t>(g.output_node)];
}

template <typename S>
Tensor<S> run_signatures(const GraphDef& g, ParamSet<S>& params,
                         const std::vector<const Tensor<S>*>& inputs) {
  if (g.signature_node < 0) throw ConfigError("graph has no signature layer");
  Trace<S> trace;
  forward(g, params, inputs, ForwardOptions{}, trace);
  const Tensor<S>& f = trace.out[static_cast<std::size_t>(g.signature_node)];
  const int n = f.dim(0);
  return f.reshaped({n, static_cast<int>(f.numel() / n)});
}

#define GAIT_INSTANTIATE_GRAPH(S)                                                              \
  template struct ParamSet<S>;                                                                 \
  template ParamSet<S> init_params<S>(const GraphDef&, Rng&);                                  \
  template ParamSet<S> zero_grads_like<S>(const ParamSet<S>&);                                 \
  template void forward<S>(const GraphDef&, ParamSet<S>&,                                      \
                           const std::vector<const Tensor<S>*>&, const ForwardOptions&,        \
                           Trace<S>&);                                                         \
  template void backward<S>(const GraphDef&, const ParamSet<S>&, const Trace<S>&, int,         \
                            const Tensor<S>&, ParamSet<S>&, std::vector<Tensor<S>>*);          \
  template Tensor<S> run_scores<S>(const GraphDef&, ParamSet<S>&,                              \
                                   const std::vector<const Tensor<S>*>&);                      \
  template Tensor<S> run_signatures<S>(const GraphDef&, ParamSet<S>&,                          \
                                       const std::vector<const Tensor<S>*>&);

GAIT_INSTANTIATE_GRAPH(float)
GAIT_INSTANTIATE_GRAPH(double)

#undef GAIT_INSTANTIATE_GRAPH

}  // namespace gait
