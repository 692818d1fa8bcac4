#include "gait/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "gait/ops.hpp"

namespace gait::gradcheck {

namespace {

constexpr double kFloor = 1e-6;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(kFloor, std::abs(a) + std::abs(b));
}

double max_rel_err(const TensorD& a, const TensorD& b) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

TensorD rand_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.next_range(lo, hi);
  return t;
}

/// Magnitudes in [0.1, 1]: keeps kinked ops (ReLU, max pool) away from the
/// non-differentiable set so central differences stay valid.
TensorD rand_tensor_offzero(const Shape& s, Rng& rng) {
  TensorD t(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const double mag = rng.next_range(0.1, 1.0);
    t[i] = (rng.next_u64() & 1) ? mag : -mag;
  }
  return t;
}

TensorD fd(const std::function<double(const TensorD&)>& f, TensorD x, double h) {
  TensorD g(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double probe_sum(const TensorD& y, const TensorD& probe) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * probe[i];
  return acc;
}

}  // namespace

double Report::worst() const {
  double w = 0.0;
  for (const auto& b : blocks) w = std::max(w, b.max_rel_err);
  return w;
}

bool Report::pass(double tolerance) const { return worst() <= tolerance; }

Report check_graph(const GraphDef& g, ParamSet<double>& params,
                   const std::vector<const TensorD*>& inputs, const std::vector<int>& labels,
                   std::uint64_t seed, double h) {
  if (g.logits_node < 0) throw ConfigError("gradient check needs a logits node");

  const auto loss_at = [&](const ParamSet<double>& p,
                           const std::vector<const TensorD*>& ins) {
    ParamSet<double> work = p;  // running stats mutate; discard per probe
    Rng rng(seed);
    Trace<double> tr;
    forward(g, work, ins, ForwardOptions{Mode::Train, &rng, true}, tr);
    return ops::softmax_cross_entropy<double>(
        tr.out[static_cast<std::size_t>(g.logits_node)], labels, nullptr);
  };

  Report report;
  ParamSet<double> grads = zero_grads_like(params);
  if (grads.t.empty()) return report;  // nothing to validate

  // Analytic gradients once.
  ParamSet<double> work = params;
  Rng rng(seed);
  Trace<double> tr;
  forward(g, work, inputs, ForwardOptions{Mode::Train, &rng, true}, tr);
  TensorD dlogits;
  ops::softmax_cross_entropy<double>(tr.out[static_cast<std::size_t>(g.logits_node)], labels,
                                     &dlogits);
  std::vector<TensorD> dinputs;
  backward(g, work, tr, g.logits_node, dlogits, grads, &dinputs);

  for (auto& [key, analytic] : grads.t) {
    const std::string k = key;
    auto numeric = fd(
        [&](const TensorD& t) {
          ParamSet<double> p = params;
          p.at(k) = t;
          return loss_at(p, inputs);
        },
        params.at(k), h);
    report.blocks.push_back({k, max_rel_err(analytic, numeric)});
  }
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    auto numeric = fd(
        [&](const TensorD& t) {
          std::vector<const TensorD*> ins = inputs;
          ins[b] = &t;
          return loss_at(params, ins);
        },
        *inputs[b], h);
    report.blocks.push_back({"input:" + g.node(g.input_nodes[b]).spec.name,
                             max_rel_err(dinputs[b], numeric)});
  }
  return report;
}

std::vector<OpCheck> check_ops(std::uint64_t seed, int instances, double tolerance, double h) {
  std::vector<OpCheck> out;
  Rng rng(seed);

  const auto record = [&](const std::string& op, double err) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const OpCheck& c) { return c.op == op; });
    if (it == out.end())
      out.push_back({op, err, err <= tolerance});
    else {
      it->max_rel_err = std::max(it->max_rel_err, err);
      it->pass = it->pass && err <= tolerance;
    }
  };

  for (int inst = 0; inst < instances; ++inst) {
    {  // conv2d
      const int n = 1 + static_cast<int>(rng.next_below(2));
      const int c = 1 + static_cast<int>(rng.next_below(3));
      const int f = 1 + static_cast<int>(rng.next_below(3));
      const int k = 1 + static_cast<int>(rng.next_below(3));
      const int s = 1 + static_cast<int>(rng.next_below(2));
      const int p = static_cast<int>(rng.next_below(2));
      const int hw = k + 3 + static_cast<int>(rng.next_below(3));
      auto x = rand_tensor({n, c, hw, hw}, rng);
      auto w = rand_tensor({k, k, c, f}, rng);
      auto b = rand_tensor({f}, rng);
      auto y0 = ops::conv2d(x, w, b, s, s, p, p);
      auto probe = rand_tensor(y0.shape(), rng);
      TensorD dx, dw, db;
      ops::conv2d_grad(x, w, probe, s, s, p, p, dx, dw, db);
      const auto loss = [&](const TensorD& xx, const TensorD& ww, const TensorD& bb) {
        return probe_sum(ops::conv2d(xx, ww, bb, s, s, p, p), probe);
      };
      double err = max_rel_err(dx, fd([&](const TensorD& t) { return loss(t, w, b); }, x, h));
      err = std::max(err, max_rel_err(dw, fd([&](const TensorD& t) { return loss(x, t, b); }, w, h)));
      err = std::max(err, max_rel_err(db, fd([&](const TensorD& t) { return loss(x, w, t); }, b, h)));
      record("conv2d", err);
    }
    {  // conv3d
      const int c = 1 + static_cast<int>(rng.next_below(2));
      const int f = 1 + static_cast<int>(rng.next_below(2));
      const int k = 1 + static_cast<int>(rng.next_below(3));
      const int s = 1 + static_cast<int>(rng.next_below(2));
      const int p = static_cast<int>(rng.next_below(2));
      const int d = k + 2 + static_cast<int>(rng.next_below(2));
      auto x = rand_tensor({1, c, d, d, d}, rng);
      auto w = rand_tensor({k, k, k, c, f}, rng);
      auto b = rand_tensor({f}, rng);
      auto y0 = ops::conv3d(x, w, b, s, s, s, p, p, p);
      auto probe = rand_tensor(y0.shape(), rng);
      TensorD dx, dw, db;
      ops::conv3d_grad(x, w, probe, s, s, s, p, p, p, dx, dw, db);
      const auto loss = [&](const TensorD& xx, const TensorD& ww, const TensorD& bb) {
        return probe_sum(ops::conv3d(xx, ww, bb, s, s, s, p, p, p), probe);
      };
      double err = max_rel_err(dx, fd([&](const TensorD& t) { return loss(t, w, b); }, x, h));
      err = std::max(err, max_rel_err(dw, fd([&](const TensorD& t) { return loss(x, t, b); }, w, h)));
      err = std::max(err, max_rel_err(db, fd([&](const TensorD& t) { return loss(x, w, t); }, b, h)));
      record("conv3d", err);
    }
    {  // max pool 2d
      auto x = rand_tensor_offzero({1, 2, 6, 6}, rng);
      Tensor<int> ix;
      auto y0 = ops::maxpool2d(x, 2, 2, 2, 2, ix);
      auto probe = rand_tensor(y0.shape(), rng);
      auto dx = ops::maxpool2d_grad(probe, ix, x.shape());
      auto numeric = fd(
          [&](const TensorD& t) {
            Tensor<int> j;
            return probe_sum(ops::maxpool2d(t, 2, 2, 2, 2, j), probe);
          },
          x, h);
      record("maxpool2d", max_rel_err(dx, numeric));
    }
    {  // max pool 3d
      auto x = rand_tensor_offzero({1, 1, 4, 4, 4}, rng);
      Tensor<int> ix;
      auto y0 = ops::maxpool3d(x, 2, 2, 2, 2, 2, 2, ix);
      auto probe = rand_tensor(y0.shape(), rng);
      auto dx = ops::maxpool3d_grad(probe, ix, x.shape());
      auto numeric = fd(
          [&](const TensorD& t) {
            Tensor<int> j;
            return probe_sum(ops::maxpool3d(t, 2, 2, 2, 2, 2, 2, j), probe);
          },
          x, h);
      record("maxpool3d", max_rel_err(dx, numeric));
    }
    {  // avg pool 2d
      auto x = rand_tensor({1, 2, 5, 5}, rng);
      auto y0 = ops::avgpool2d(x, 2, 2, 1, 1);
      auto probe = rand_tensor(y0.shape(), rng);
      auto dx = ops::avgpool2d_grad(probe, x.shape(), 2, 2, 1, 1);
      auto numeric = fd(
          [&](const TensorD& t) { return probe_sum(ops::avgpool2d(t, 2, 2, 1, 1), probe); }, x,
          h);
      record("avgpool2d", max_rel_err(dx, numeric));
    }
    {  // lrn
      auto x = rand_tensor({1, 6, 3, 3}, rng, -2.0, 2.0);
      auto probe = rand_tensor(x.shape(), rng);
      auto dx = ops::lrn_grad(x, probe, 5, 1e-4, 0.75, 2.0);
      auto numeric = fd(
          [&](const TensorD& t) { return probe_sum(ops::lrn(t, 5, 1e-4, 0.75, 2.0), probe); },
          x, h);
      record("lrn", max_rel_err(dx, numeric));
    }
    {  // batch norm (train statistics)
      auto x = rand_tensor({3, 2, 2, 2}, rng);
      auto gamma = rand_tensor({2}, rng, 0.5, 1.5);
      auto beta = rand_tensor({2}, rng);
      auto probe = rand_tensor(x.shape(), rng);
      const auto loss = [&](const TensorD& xx, const TensorD& gg, const TensorD& bb) {
        TensorD rm({2}), rv({2}, std::vector<double>{1, 1}), sm, si;
        return probe_sum(ops::batchnorm_train(xx, gg, bb, rm, rv, 0.9, 1e-5, sm, si), probe);
      };
      TensorD rm({2}), rv({2}, std::vector<double>{1, 1}), sm, si;
      ops::batchnorm_train(x, gamma, beta, rm, rv, 0.9, 1e-5, sm, si);
      TensorD dx, dgamma, dbeta;
      ops::batchnorm_grad(x, gamma, probe, sm, si, dx, dgamma, dbeta);
      double err = max_rel_err(dx, fd([&](const TensorD& t) { return loss(t, gamma, beta); }, x, h));
      err = std::max(err, max_rel_err(dgamma, fd([&](const TensorD& t) { return loss(x, t, beta); }, gamma, h)));
      err = std::max(err, max_rel_err(dbeta, fd([&](const TensorD& t) { return loss(x, gamma, t); }, beta, h)));
      record("batchnorm", err);
    }
    {  // fully connected
      const int n = 2 + static_cast<int>(rng.next_below(2));
      const int din = 3 + static_cast<int>(rng.next_below(4));
      const int u = 2 + static_cast<int>(rng.next_below(4));
      auto x = rand_tensor({n, din}, rng);
      auto w = rand_tensor({din, u}, rng);
      auto b = rand_tensor({u}, rng);
      auto probe = rand_tensor({n, u}, rng);
      TensorD dx, dw, db;
      ops::fully_connected_grad(x, w, probe, dx, dw, db);
      const auto loss = [&](const TensorD& xx, const TensorD& ww, const TensorD& bb) {
        return probe_sum(ops::fully_connected(xx, ww, bb), probe);
      };
      double err = max_rel_err(dx, fd([&](const TensorD& t) { return loss(t, w, b); }, x, h));
      err = std::max(err, max_rel_err(dw, fd([&](const TensorD& t) { return loss(x, t, b); }, w, h)));
      err = std::max(err, max_rel_err(db, fd([&](const TensorD& t) { return loss(x, w, t); }, b, h)));
      record("fc", err);
    }
    {  // relu
      auto x = rand_tensor_offzero({2, 7}, rng);
      auto probe = rand_tensor(x.shape(), rng);
      auto dx = ops::relu_grad(x, probe);
      auto numeric =
          fd([&](const TensorD& t) { return probe_sum(ops::relu(t), probe); }, x, h);
      record("relu", max_rel_err(dx, numeric));
    }
    {  // dropout with the stream disabled (identity path)
      auto x = rand_tensor({2, 9}, rng);
      auto probe = rand_tensor(x.shape(), rng);
      TensorD mask;
      Rng stream(seed + 17);
      ops::dropout_train(x, 0.0, stream, mask);
      auto dx = ops::dropout_grad(probe, mask);
      auto numeric = fd(
          [&](const TensorD& t) {
            TensorD m;
            Rng r(seed + 17);
            return probe_sum(ops::dropout_train(t, 0.0, r, m), probe);
          },
          x, h);
      record("dropout-off", max_rel_err(dx, numeric));
    }
    {  // softmax + cross-entropy (fused on logits)
      const int n = 2 + static_cast<int>(rng.next_below(2));
      const int c = 3 + static_cast<int>(rng.next_below(4));
      auto logits = rand_tensor({n, c}, rng, -2.0, 2.0);
      std::vector<int> labels;
      for (int i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.next_below(c)));
      TensorD d;
      ops::softmax_cross_entropy<double>(logits, labels, &d);
      auto numeric = fd(
          [&](const TensorD& t) {
            return ops::softmax_cross_entropy<double>(t, labels, nullptr);
          },
          logits, h);
      record("softmax-xent", max_rel_err(d, numeric));
    }
  }
  return out;
}

}  // namespace gait::gradcheck
