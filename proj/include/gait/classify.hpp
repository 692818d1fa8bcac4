#pragma once

#include <map>
#include <string>
#include <vector>

#include "gait/io.hpp"

/// Sequence-level identity decisions: aggregation of per-subsequence softmax
/// outputs into a video verdict, late fusion across modalities, fusion-weight
/// selection on a validation split, and nearest-neighbour matching of gait
/// signatures.
namespace gait::classify {

/// Per-class probabilities for one subsequence or one video. Raw products or
/// neighbour counts may arrive unscaled; they carry `normalized = false` and
/// are rescaled on demand by the consumers that care.
struct ScoreVector {
  std::vector<double> probs;  // entries >= 0
  std::string source;         // subsequence or video id
  std::string modality;
  bool normalized = true;
};

ScoreVector from_line(const io::ScoreLine& line);
io::ScoreLine to_line(const ScoreVector& s);

/// Rescales to sum 1. Throws NumericError when the mass is (numerically)
/// zero, i.e. every class was ruled out.
void normalize(ScoreVector& s);

/// Index of the largest entry; ties go to the lowest index.
int argmax(const std::vector<double>& v);

// -- per-video aggregation ----------------------------------------------

/// Elementwise product of the subsequence distributions, computed in log
/// space (zeros clamped to 1e-12) and renormalized. With one subsequence the
/// distribution passes through unchanged.
ScoreVector sm_prod(const std::vector<ScoreVector>& subsequences);

/// Majority vote over the subsequence argmaxes. Vote ties are broken by the
/// product score of the tied classes, then by the lowest class index.
int sm_vote(const std::vector<ScoreVector>& subsequences);

// -- late fusion across modalities ---------------------------------------

/// Product rule over per-modality video distributions; same log-space core
/// as sm_prod. One modality degenerates to a renormalized pass-through.
ScoreVector fuse_product(const std::vector<ScoreVector>& per_modality);

/// One positive weight per modality, summing to 1.
struct FusionWeights {
  std::vector<double> beta;

  void validate() const;  // beta_i > 0, sum within 1e-9 of 1
};

/// (0.6, 0.4) for two modalities, (0.4, 0.3, 0.3) for three, else uniform.
FusionWeights default_weights(int n_modalities);

/// Convex combination sum_i beta_i * p_i; inputs are normalized on demand so
/// the output sums to 1 by construction.
ScoreVector fuse_weighted_sum(const std::vector<ScoreVector>& per_modality,
                              const FusionWeights& w);

/// Every weight vector with components from {0.1, ..., 0.9} summing to 1, in
/// lexicographic order: 9 candidates for two modalities, 36 for three.
std::vector<FusionWeights> beta_grid(int n_modalities);

/// Exhaustive search over beta_grid for the weights with the best rank-1
/// accuracy on held-out videos; ties keep the lexicographically earliest.
/// val_scores[m][v] is video v's distribution under modality m.
FusionWeights grid_search_beta(const std::vector<std::vector<ScoreVector>>& val_scores,
                               const std::vector<int>& labels);

// -- nearest-neighbour matching ------------------------------------------

/// Feature vector read from the layer in front of the classifier, tagged
/// with the identity it belongs to (when known).
struct GaitSignature {
  std::vector<double> features;
  int subject = -1;
  std::string source;
  std::string modality;
};

struct KnnResult {
  int subject = -1;
  std::map<int, double> scores;  // class id -> fraction of the k neighbours
};

/// Majority class among the k nearest gallery signatures under Euclidean
/// distance. Count ties are broken by summed inverse distance, then by the
/// lowest class id.
KnnResult knn_classify(const GaitSignature& probe,
                       const std::vector<GaitSignature>& gallery, int k = 7);

/// Lays the neighbour fractions out over an explicit class list so that
/// nearest-neighbour evidence can enter fuse_product like any other score.
ScoreVector knn_score_vector(const KnnResult& r, const std::vector<int>& class_ids,
                             std::string source = "", std::string modality = "");

}  // namespace gait::classify
