#include "gait/classify.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>

#include "gait/errors.hpp"

namespace gait::classify {

namespace {

constexpr double kLogClamp = 1e-12;  // floor for hard zeros before log

// Shared precondition sweep: non-empty list, equal lengths, no negative
// entries, no all-zero vector (which would void the product entirely).
void check_score_list(const std::vector<ScoreVector>& list, const char* op) {
  if (list.empty()) throw ConfigError(std::string(op) + ": empty score list");
  const std::size_t c = list.front().probs.size();
  if (c == 0) throw ConfigError(std::string(op) + ": zero classes");
  for (const ScoreVector& s : list) {
    if (s.probs.size() != c)
      throw ConfigError(std::string(op) + ": class count mismatch (" +
                        std::to_string(s.probs.size()) + " vs " + std::to_string(c) + ")");
    double mass = 0.0;
    for (double p : s.probs) {
      if (!(p >= 0.0))
        throw ConfigError(std::string(op) + ": negative or non-finite probability in '" +
                          s.source + "'");
      mass += p;
    }
    if (mass <= 0.0)
      throw ConfigError(std::string(op) + ": all classes zero in '" + s.source + "'");
  }
}

// Log-space product with renormalization. Per-vector scale factors shift
// every log by a constant and cancel, so unnormalized inputs are harmless.
ScoreVector log_product(const std::vector<ScoreVector>& list, const char* op) {
  check_score_list(list, op);
  const std::size_t c = list.front().probs.size();
  std::vector<double> acc(c, 0.0);
  for (const ScoreVector& s : list)
    for (std::size_t i = 0; i < c; ++i) acc[i] += std::log(std::max(s.probs[i], kLogClamp));

  const double top = *std::max_element(acc.begin(), acc.end());
  double norm = 0.0;
  for (double a : acc) norm += std::exp(a - top);

  ScoreVector out;
  out.probs.resize(c);
  for (std::size_t i = 0; i < c; ++i) out.probs[i] = std::exp(acc[i] - top) / norm;
  out.source = list.front().source;
  return out;
}

}  // namespace

ScoreVector from_line(const io::ScoreLine& line) {
  ScoreVector s;
  s.probs = line.probs;
  s.source = line.video_id;
  s.modality = line.modality;
  double mass = 0.0;
  for (double p : s.probs) mass += p;
  s.normalized = std::abs(mass - 1.0) <= 1e-6;
  return s;
}

io::ScoreLine to_line(const ScoreVector& s) {
  io::ScoreLine line;
  line.video_id = s.source;
  line.modality = s.modality;
  line.probs = s.probs;
  return line;
}

void normalize(ScoreVector& s) {
  double mass = 0.0;
  for (double p : s.probs) mass += p;
  if (!(mass > 0.0))
    throw NumericError("cannot normalize a zero-mass score vector ('" + s.source + "')");
  for (double& p : s.probs) p /= mass;
  s.normalized = true;
}

int argmax(const std::vector<double>& v) {
  if (v.empty()) throw ConfigError("argmax of empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

ScoreVector sm_prod(const std::vector<ScoreVector>& subsequences) {
  ScoreVector out = log_product(subsequences, "sm_prod");
  out.modality = subsequences.front().modality;
  return out;
}

int sm_vote(const std::vector<ScoreVector>& subsequences) {
  check_score_list(subsequences, "sm_vote");
  std::vector<int> votes(subsequences.front().probs.size(), 0);
  for (const ScoreVector& s : subsequences) ++votes[static_cast<std::size_t>(argmax(s.probs))];

  const int top = *std::max_element(votes.begin(), votes.end());
  std::vector<int> tied;
  for (std::size_t c = 0; c < votes.size(); ++c)
    if (votes[c] == top) tied.push_back(static_cast<int>(c));
  if (tied.size() == 1) return tied.front();

  // vote tie: prefer the tied class with the larger product score; the
  // product is deterministic and the lowest index wins residual ties
  const ScoreVector prod = sm_prod(subsequences);
  int best = tied.front();
  for (int c : tied)
    if (prod.probs[static_cast<std::size_t>(c)] > prod.probs[static_cast<std::size_t>(best)])
      best = c;
  return best;
}

ScoreVector fuse_product(const std::vector<ScoreVector>& per_modality) {
  ScoreVector out = log_product(per_modality, "fuse_product");
  for (std::size_t i = 0; i < per_modality.size(); ++i) {
    if (i) out.modality += "+";
    out.modality += per_modality[i].modality;
  }
  return out;
}

void FusionWeights::validate() const {
  if (beta.empty()) throw ConfigError("fusion weights: empty");
  double sum = 0.0;
  for (double b : beta) {
    if (!(b > 0.0)) throw ConfigError("fusion weights: every beta must be positive");
    sum += b;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("fusion weights: sum " + std::to_string(sum) + " != 1");
}

FusionWeights default_weights(int n_modalities) {
  if (n_modalities < 1) throw ConfigError("default_weights: need at least one modality");
  if (n_modalities == 2) return {{0.6, 0.4}};
  if (n_modalities == 3) return {{0.4, 0.3, 0.3}};
  return {std::vector<double>(static_cast<std::size_t>(n_modalities), 1.0 / n_modalities)};
}

ScoreVector fuse_weighted_sum(const std::vector<ScoreVector>& per_modality,
                              const FusionWeights& w) {
  w.validate();
  check_score_list(per_modality, "fuse_weighted_sum");
  if (w.beta.size() != per_modality.size())
    throw ConfigError("fuse_weighted_sum: " + std::to_string(w.beta.size()) + " weights for " +
                      std::to_string(per_modality.size()) + " modalities");

  const std::size_t c = per_modality.front().probs.size();
  ScoreVector out;
  out.probs.assign(c, 0.0);
  out.source = per_modality.front().source;
  for (std::size_t m = 0; m < per_modality.size(); ++m) {
    ScoreVector s = per_modality[m];  // scale matters here, unlike products
    if (!s.normalized) normalize(s);
    for (std::size_t i = 0; i < c; ++i) out.probs[i] += w.beta[m] * s.probs[i];
    if (m) out.modality += "+";
    out.modality += per_modality[m].modality;
  }
  return out;
}

std::vector<FusionWeights> beta_grid(int n_modalities) {
  if (n_modalities < 1) throw ConfigError("beta_grid: need at least one modality");
  if (n_modalities == 1) return {FusionWeights{{1.0}}};

  // integer tenths sidestep float drift: parts from {1..9} summing to 10,
  // emitted in lexicographic order
  std::vector<FusionWeights> grid;
  std::vector<int> parts(static_cast<std::size_t>(n_modalities), 0);
  auto rec = [&](auto&& self, int slot, int left) -> void {
    if (slot == n_modalities - 1) {
      if (left >= 1 && left <= 9) {
        parts[static_cast<std::size_t>(slot)] = left;
        FusionWeights w;
        for (int p : parts) w.beta.push_back(p / 10.0);
        grid.push_back(std::move(w));
      }
      return;
    }
    for (int p = 1; p <= 9 && p < left; ++p) {
      parts[static_cast<std::size_t>(slot)] = p;
      self(self, slot + 1, left - p);
    }
  };
  rec(rec, 0, 10);
  return grid;
}

FusionWeights grid_search_beta(const std::vector<std::vector<ScoreVector>>& val_scores,
                               const std::vector<int>& labels) {
  if (val_scores.empty()) throw ConfigError("grid_search_beta: no modalities");
  if (labels.empty()) throw ConfigError("grid_search_beta: empty validation set");
  for (const auto& m : val_scores)
    if (m.size() != labels.size())
      throw ConfigError("grid_search_beta: modality has " + std::to_string(m.size()) +
                        " videos, expected " + std::to_string(labels.size()));

  FusionWeights best;
  int best_hits = -1;
  for (const FusionWeights& w : beta_grid(static_cast<int>(val_scores.size()))) {
    int hits = 0;
    for (std::size_t v = 0; v < labels.size(); ++v) {
      std::vector<ScoreVector> stack;
      stack.reserve(val_scores.size());
      for (const auto& m : val_scores) stack.push_back(m[v]);
      if (argmax(fuse_weighted_sum(stack, w).probs) == labels[v]) ++hits;
    }
    if (hits > best_hits) {  // strict: earlier grid entries keep ties
      best_hits = hits;
      best = w;
    }
  }
  return best;
}

KnnResult knn_classify(const GaitSignature& probe, const std::vector<GaitSignature>& gallery,
                       int k) {
  if (gallery.empty()) throw ConfigError("knn_classify: empty gallery");
  if (k < 1 || static_cast<std::size_t>(k) > gallery.size())
    throw ConfigError("knn_classify: k = " + std::to_string(k) + " outside [1, " +
                      std::to_string(gallery.size()) + "]");

  std::vector<double> dist(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    const GaitSignature& g = gallery[i];
    if (g.features.size() != probe.features.size())
      throw ConfigError("knn_classify: signature dimension mismatch (" +
                        std::to_string(g.features.size()) + " vs " +
                        std::to_string(probe.features.size()) + ") at '" + g.source + "'");
    double acc = 0.0;
    for (std::size_t d = 0; d < probe.features.size(); ++d) {
      const double diff = probe.features[d] - g.features[d];
      acc += diff * diff;
    }
    dist[i] = std::sqrt(acc);
  }

  std::vector<std::size_t> order(gallery.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (dist[a] != dist[b]) return dist[a] < dist[b];
                      return a < b;  // stable under duplicate gallery points
                    });

  std::map<int, int> count;
  std::map<int, double> pull;  // summed inverse distance per class
  for (int i = 0; i < k; ++i) {
    const std::size_t g = order[static_cast<std::size_t>(i)];
    ++count[gallery[g].subject];
    pull[gallery[g].subject] += 1.0 / std::max(dist[g], 1e-12);
  }

  KnnResult r;
  int best_count = -1;
  double best_pull = -1.0;
  for (const auto& [cls, n] : count) {
    r.scores[cls] = static_cast<double>(n) / static_cast<double>(k);
    // map order is ascending class id, so > keeps the lowest id on full ties
    if (n > best_count || (n == best_count && pull[cls] > best_pull)) {
      best_count = n;
      best_pull = pull[cls];
      r.subject = cls;
    }
  }
  return r;
}

ScoreVector knn_score_vector(const KnnResult& r, const std::vector<int>& class_ids,
                             std::string source, std::string modality) {
  if (class_ids.empty()) throw ConfigError("knn_score_vector: empty class list");
  ScoreVector s;
  s.probs.reserve(class_ids.size());
  double mass = 0.0;
  for (int c : class_ids) {
    auto it = r.scores.find(c);
    const double p = it == r.scores.end() ? 0.0 : it->second;
    s.probs.push_back(p);
    mass += p;
  }
  if (!(mass > 0.0))
    throw ConfigError("knn_score_vector: no neighbour mass falls on the class list");
  s.source = std::move(source);
  s.modality = std::move(modality);
  s.normalized = std::abs(mass - 1.0) <= 1e-6;
  return s;
}

}  // namespace gait::classify
