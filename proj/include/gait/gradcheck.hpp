#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gait/graph.hpp"

/// Finite-difference validation of analytic gradients, always in 64-bit
/// precision (the "oracle mode" of the numeric core).
namespace gait::gradcheck {

struct BlockReport {
  std::string block;   // parameter name, or "input"
  double max_rel_err;  // max |a-fd| / max(floor, |a|+|fd|)
};

struct Report {
  std::vector<BlockReport> blocks;
  double worst() const;
  bool pass(double tolerance) const;
};

/// Checks every trainable parameter block of `g` (and the inputs) against
/// central differences of the cross-entropy loss at the logits node. The
/// same stream seed is replayed for every evaluation, so dropout masks are
/// frozen across probes. A graph without trainable parameters yields an
/// empty report.
Report check_graph(const GraphDef& g, ParamSet<double>& params,
                   const std::vector<const TensorD*>& inputs, const std::vector<int>& labels,
                   std::uint64_t seed, double h = 1e-5);

struct OpCheck {
  std::string op;
  double max_rel_err;
  bool pass;
};

/// Per-kind sweep: `instances` random small cases per op kind, each compared
/// against central differences with step h.
std::vector<OpCheck> check_ops(std::uint64_t seed, int instances, double tolerance,
                               double h = 1e-5);

}  // namespace gait::gradcheck
