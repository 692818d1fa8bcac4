#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "gait/classify.hpp"
#include "gait/errors.hpp"

using namespace gait;
using classify::FusionWeights;
using classify::GaitSignature;
using classify::ScoreVector;

namespace {

ScoreVector sv(std::vector<double> probs, std::string source = "v0",
               std::string modality = "gray") {
  ScoreVector s;
  s.probs = std::move(probs);
  s.source = std::move(source);
  s.modality = std::move(modality);
  return s;
}

std::vector<int> ranking(const std::vector<double>& probs) {
  std::vector<int> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return probs[(size_t)a] > probs[(size_t)b]; });
  return idx;
}

GaitSignature sig(std::vector<double> f, int subject, std::string source = "g") {
  GaitSignature s;
  s.features = std::move(f);
  s.subject = subject;
  s.source = std::move(source);
  return s;
}

}  // namespace

TEST_CASE("product of two identical two-class distributions matches the hand value") {
  auto out = classify::sm_prod({sv({0.6, 0.4}), sv({0.6, 0.4})});
  // 0.36 and 0.16 renormalized by 0.52
  CHECK(out.probs[0] == doctest::Approx(0.36 / 0.52).epsilon(1e-12));
  CHECK(out.probs[1] == doctest::Approx(0.16 / 0.52).epsilon(1e-12));
  CHECK(out.probs[0] + out.probs[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single-subsequence product passes the distribution through") {
  auto out = classify::sm_prod({sv({0.3, 0.5, 0.2}, "clip7", "depth")});
  CHECK(out.probs[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(out.probs[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.probs[2] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(out.source == "clip7");
  CHECK(out.modality == "depth");
}

TEST_CASE("uniform subsequence distributions stay uniform after aggregation") {
  std::vector<ScoreVector> subs(4, sv({0.25, 0.25, 0.25, 0.25}));
  auto out = classify::sm_prod(subs);
  for (double p : out.probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("log-space product agrees with the direct product when it does not underflow") {
  std::vector<ScoreVector> subs = {
      sv({0.10, 0.40, 0.20, 0.05, 0.25}),
      sv({0.30, 0.30, 0.10, 0.10, 0.20}),
      sv({0.05, 0.55, 0.15, 0.05, 0.20}),
  };
  std::vector<double> direct(5, 1.0);
  for (const auto& s : subs)
    for (int c = 0; c < 5; ++c) direct[(size_t)c] *= s.probs[(size_t)c];
  const double mass = std::accumulate(direct.begin(), direct.end(), 0.0);
  for (double& p : direct) p /= mass;

  auto out = classify::sm_prod(subs);
  for (int c = 0; c < 5; ++c)
    CHECK(std::abs(out.probs[(size_t)c] - direct[(size_t)c]) < 1e-6);
}

TEST_CASE("product survives 20 subsequences over 155 classes without underflow") {
  // direct 32-bit products of 20 softmax factors at 1/155 scale die; the
  // log-space path must keep a clean distribution
  const int c = 155;
  std::vector<double> base((size_t)c, 1.0 / c);
  base[17] = 3.0 / c;  // consistent light preference for class 17
  double mass = std::accumulate(base.begin(), base.end(), 0.0);
  for (double& p : base) p /= mass;
  std::vector<ScoreVector> subs(20, sv(base));
  auto out = classify::sm_prod(subs);
  double sum = std::accumulate(out.probs.begin(), out.probs.end(), 0.0);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(classify::argmax(out.probs) == 17);
  CHECK(out.probs[17] > 0.99);  // 3^20 over the rest
}

TEST_CASE("aggregation is invariant to subsequence order") {
  std::vector<ScoreVector> subs = {
      sv({0.7, 0.1, 0.2}), sv({0.2, 0.5, 0.3}), sv({0.4, 0.4, 0.2}), sv({0.1, 0.8, 0.1})};
  std::vector<ScoreVector> rev(subs.rbegin(), subs.rend());
  auto a = classify::sm_prod(subs);
  auto b = classify::sm_prod(rev);
  for (int c = 0; c < 3; ++c)
    CHECK(a.probs[(size_t)c] == doctest::Approx(b.probs[(size_t)c]).epsilon(1e-12));
  CHECK(classify::sm_vote(subs) == classify::sm_vote(rev));
}

TEST_CASE("aggregation is associative once renormalized") {
  auto a = sv({0.6, 0.3, 0.1});
  auto b = sv({0.2, 0.5, 0.3});
  auto c = sv({0.3, 0.3, 0.4});
  auto all = classify::sm_prod({a, b, c});
  auto nested = classify::fuse_product({classify::sm_prod({a, b}), c});
  for (int i = 0; i < 3; ++i)
    CHECK(all.probs[(size_t)i] == doctest::Approx(nested.probs[(size_t)i]).epsilon(1e-12));
}

TEST_CASE("a hard zero in one subsequence cannot annihilate a supported class") {
  auto out = classify::sm_prod({sv({0.0, 1.0}), sv({0.9, 0.1})});
  CHECK(out.probs[0] > 0.0);  // clamped, not erased
  CHECK(out.probs[1] > 0.999);
  CHECK(classify::argmax(out.probs) == 1);
}

TEST_CASE("aggregation rejects malformed score lists") {
  CHECK_THROWS_AS(classify::sm_prod({}), ConfigError);
  CHECK_THROWS_AS(classify::sm_prod({sv({0.5, 0.5}), sv({1.0})}), ConfigError);
  CHECK_THROWS_AS(classify::sm_prod({sv({0.0, 0.0})}), ConfigError);
  CHECK_THROWS_AS(classify::sm_prod({sv({0.5, -0.5})}), ConfigError);
  CHECK_THROWS_AS(classify::sm_vote({}), ConfigError);
}

TEST_CASE("clear vote majorities win regardless of confidence") {
  // argmax pattern 2, 2, 5 over six classes
  std::vector<ScoreVector> subs = {
      sv({0.1, 0.1, 0.4, 0.2, 0.1, 0.1}),
      sv({0.15, 0.15, 0.3, 0.15, 0.15, 0.1}),
      sv({0.01, 0.01, 0.01, 0.01, 0.01, 0.95}),
  };
  CHECK(classify::sm_vote(subs) == 2);
  CHECK(classify::sm_vote({subs[2]}) == 5);  // single clip: its own argmax
}

TEST_CASE("vote ties fall back to the product score") {
  // classes 1 and 3 get two votes each; the product prefers class 3
  std::vector<ScoreVector> subs = {
      sv({0.1, 0.6, 0.1, 0.2}),
      sv({0.1, 0.5, 0.2, 0.2}),
      sv({0.2, 0.1, 0.1, 0.6}),
      sv({0.2, 0.1, 0.2, 0.5}),
  };
  auto prod = classify::sm_prod(subs);
  REQUIRE(prod.probs[3] > prod.probs[1]);
  CHECK(classify::sm_vote(subs) == 3);
}

TEST_CASE("fully tied votes and products resolve to the lowest class index") {
  auto out = classify::sm_vote({sv({0.6, 0.4}), sv({0.4, 0.6})});
  CHECK(out == 0);
}

TEST_CASE("single-modality fusion preserves the ranking exactly") {
  auto in = sv({0.15, 0.05, 0.4, 0.1, 0.3});
  auto out = classify::fuse_product({in});
  CHECK(ranking(out.probs) == ranking(in.probs));
  FusionWeights unit{{1.0}};
  auto ws = classify::fuse_weighted_sum({in}, unit);
  CHECK(ranking(ws.probs) == ranking(in.probs));
  for (int c = 0; c < 5; ++c)
    CHECK(ws.probs[(size_t)c] == doctest::Approx(in.probs[(size_t)c]).epsilon(1e-12));
}

TEST_CASE("a confident modality dominates an uninformed one under the product rule") {
  auto out = classify::fuse_product({sv({0.9, 0.1}, "v1", "gray"), sv({0.5, 0.5}, "v1", "flow")});
  CHECK(classify::argmax(out.probs) == 0);
  CHECK(out.probs[0] == doctest::Approx(0.9).epsilon(1e-9));  // uniform factor cancels
  CHECK(out.modality == "gray+flow");
}

TEST_CASE("three-way product fusion equals brute-force per-class multiplication") {
  std::vector<ScoreVector> mods = {
      sv({0.50, 0.20, 0.20, 0.10}, "v2", "gray"),
      sv({0.10, 0.30, 0.40, 0.20}, "v2", "depth"),
      sv({0.25, 0.25, 0.25, 0.25}, "v2", "flow"),
  };
  std::vector<double> direct(4, 1.0);
  for (const auto& m : mods)
    for (int c = 0; c < 4; ++c) direct[(size_t)c] *= m.probs[(size_t)c];
  const double mass = std::accumulate(direct.begin(), direct.end(), 0.0);
  auto out = classify::fuse_product(mods);
  for (int c = 0; c < 4; ++c)
    CHECK(out.probs[(size_t)c] == doctest::Approx(direct[(size_t)c] / mass).epsilon(1e-9));
}

TEST_CASE("weighted-sum fusion matches a hand-computed convex combination") {
  FusionWeights w{{0.6, 0.4}};
  auto out = classify::fuse_weighted_sum({sv({0.9, 0.1}), sv({0.2, 0.8})}, w);
  CHECK(out.probs[0] == doctest::Approx(0.62).epsilon(1e-12));
  CHECK(out.probs[1] == doctest::Approx(0.38).epsilon(1e-12));
}

TEST_CASE("identical inputs are a fixed point of weighted-sum fusion") {
  auto in = sv({0.3, 0.45, 0.25});
  FusionWeights w{{0.7, 0.2, 0.1}};
  auto out = classify::fuse_weighted_sum({in, in, in}, w);
  for (int c = 0; c < 3; ++c)
    CHECK(out.probs[(size_t)c] == doctest::Approx(in.probs[(size_t)c]).epsilon(1e-12));
}

TEST_CASE("weighted-sum output stays inside the elementwise convex hull") {
  std::vector<ScoreVector> mods = {sv({0.7, 0.2, 0.1}), sv({0.1, 0.6, 0.3}),
                                   sv({0.2, 0.2, 0.6})};
  auto out = classify::fuse_weighted_sum(mods, classify::default_weights(3));
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) {
    double lo = 1.0, hi = 0.0;
    for (const auto& m : mods) {
      lo = std::min(lo, m.probs[(size_t)c]);
      hi = std::max(hi, m.probs[(size_t)c]);
    }
    CHECK(out.probs[(size_t)c] >= lo - 1e-12);
    CHECK(out.probs[(size_t)c] <= hi + 1e-12);
    sum += out.probs[(size_t)c];
  }
  CHECK(std::abs(sum - 1.0) < 1e-6);
}

TEST_CASE("weighted-sum fusion rescales unnormalized inputs before mixing") {
  auto raw = sv({1.8, 0.2});  // counts, not probabilities
  raw.normalized = false;
  FusionWeights w{{0.5, 0.5}};
  auto out = classify::fuse_weighted_sum({raw, sv({0.5, 0.5})}, w);
  CHECK(out.probs[0] == doctest::Approx(0.5 * 0.9 + 0.25).epsilon(1e-12));
}

TEST_CASE("default fusion weights follow the modality count") {
  auto two = classify::default_weights(2);
  REQUIRE(two.beta.size() == 2);
  CHECK(two.beta[0] == doctest::Approx(0.6));
  CHECK(two.beta[1] == doctest::Approx(0.4));

  auto three = classify::default_weights(3);
  REQUIRE(three.beta.size() == 3);
  CHECK(three.beta[0] == doctest::Approx(0.4));
  CHECK(three.beta[1] == doctest::Approx(0.3));
  CHECK(three.beta[2] == doctest::Approx(0.3));

  auto four = classify::default_weights(4);
  for (double b : four.beta) CHECK(b == doctest::Approx(0.25));
  CHECK_THROWS_AS(classify::default_weights(0), ConfigError);
}

TEST_CASE("fusion weight constraints are enforced") {
  CHECK_THROWS_AS((FusionWeights{{0.5, 0.6}}.validate()), ConfigError);
  CHECK_THROWS_AS((FusionWeights{{1.2, -0.2}}.validate()), ConfigError);
  CHECK_THROWS_AS(FusionWeights{{}}.validate(), ConfigError);
  CHECK_NOTHROW((FusionWeights{{0.25, 0.75}}.validate()));
  auto in = sv({0.5, 0.5});
  CHECK_THROWS_AS(classify::fuse_weighted_sum({in, in, in}, FusionWeights{{0.6, 0.4}}),
                  ConfigError);
}

TEST_CASE("the weight grid enumerates 9 two-modality and 36 three-modality candidates") {
  auto g2 = classify::beta_grid(2);
  REQUIRE(g2.size() == 9);
  CHECK((g2.front().beta == std::vector<double>{0.1, 0.9}));
  CHECK((g2.back().beta == std::vector<double>{0.9, 0.1}));

  auto g3 = classify::beta_grid(3);
  REQUIRE(g3.size() == 36);
  CHECK((g3.front().beta == std::vector<double>{0.1, 0.1, 0.8}));
  CHECK((g3.back().beta == std::vector<double>{0.8, 0.1, 0.1}));

  for (const auto& w : g3) CHECK_NOTHROW(w.validate());
  for (size_t i = 1; i < g3.size(); ++i) CHECK(g3[i - 1].beta < g3[i].beta);  // lexicographic
}

TEST_CASE("grid search hands the informative modality its maximal weight") {
  // two easy videos where both modalities agree, plus one video that is only
  // classified correctly when beta_0 / beta_1 > 8.5 -- i.e. at (0.9, 0.1)
  std::vector<ScoreVector> a = {sv({0.9, 0.1}), sv({0.1, 0.9}), sv({0.55, 0.45})};
  std::vector<ScoreVector> b = {sv({0.8, 0.2}), sv({0.2, 0.8}), sv({0.075, 0.925})};
  std::vector<int> labels = {0, 1, 0};
  auto w = classify::grid_search_beta({a, b}, labels);
  CHECK((w.beta == std::vector<double>{0.9, 0.1}));
}

TEST_CASE("grid search keeps the earliest candidate when accuracies tie") {
  std::vector<ScoreVector> a = {sv({0.9, 0.1}), sv({0.3, 0.7})};
  std::vector<int> labels = {0, 1};
  auto w = classify::grid_search_beta({a, a}, labels);  // all weights equivalent
  CHECK((w.beta == std::vector<double>{0.1, 0.9}));
}

TEST_CASE("grid search validates its inputs") {
  std::vector<ScoreVector> a = {sv({0.9, 0.1})};
  CHECK_THROWS_AS(classify::grid_search_beta({}, {0}), ConfigError);
  CHECK_THROWS_AS(classify::grid_search_beta({a, a}, {}), ConfigError);
  CHECK_THROWS_AS(classify::grid_search_beta({a, {}}, {0}), ConfigError);
}

TEST_CASE("a probe equal to a gallery point is claimed by that point at k equals 1") {
  std::vector<GaitSignature> gal = {sig({1.0, 2.0}, 4), sig({5.0, 5.0}, 9)};
  auto r = classify::knn_classify(sig({5.0, 5.0}, -1, "probe"), gal, 1);
  CHECK(r.subject == 9);
  CHECK(r.scores.at(9) == doctest::Approx(1.0));
}

TEST_CASE("two well-separated clusters are classified perfectly at k equals 7") {
  std::vector<GaitSignature> gal;
  for (int i = 0; i < 10; ++i) {
    gal.push_back(sig({0.0 + 0.01 * i, 0.1 * i, 0.0}, 1));
    gal.push_back(sig({50.0 + 0.01 * i, 0.1 * i, 30.0}, 2));
  }
  int hits = 0;
  for (int i = 0; i < 6; ++i) {
    auto near1 = classify::knn_classify(sig({0.3 * i, 0.2, 0.1}, -1), gal, 7);
    auto near2 = classify::knn_classify(sig({50.0 - 0.3 * i, 0.2, 29.9}, -1), gal, 7);
    hits += (near1.subject == 1) + (near2.subject == 2);
    CHECK(near1.scores.at(1) == doctest::Approx(1.0));  // all 7 neighbours agree
  }
  CHECK(hits == 12);
}

TEST_CASE("balanced neighbourhood ties are broken by summed inverse distance") {
  // k = gallery size: three of each class, class 8's points sit closer
  std::vector<GaitSignature> gal = {
      sig({2.0, 0.0}, 3), sig({0.0, 3.0}, 3), sig({-4.0, 0.0}, 3),
      sig({1.0, 0.0}, 8), sig({0.0, 2.0}, 8), sig({-3.0, 0.0}, 8),
  };
  auto r = classify::knn_classify(sig({0.0, 0.0}, -1), gal, 6);
  CHECK(r.subject == 8);
  CHECK(r.scores.at(3) == doctest::Approx(0.5));
  CHECK(r.scores.at(8) == doctest::Approx(0.5));
}

TEST_CASE("exactly mirrored neighbourhoods fall back to the lowest class id") {
  std::vector<GaitSignature> gal = {
      sig({1.0, 0.0}, 6), sig({2.0, 0.0}, 6),
      sig({-1.0, 0.0}, 4), sig({-2.0, 0.0}, 4),
  };
  auto r = classify::knn_classify(sig({0.0, 0.0}, -1), gal, 4);
  CHECK(r.subject == 4);
}

TEST_CASE("nearest-neighbour preconditions are enforced") {
  std::vector<GaitSignature> gal = {sig({1.0, 0.0}, 1)};
  CHECK_THROWS_AS(classify::knn_classify(sig({0.0, 0.0}, -1), {}, 1), ConfigError);
  CHECK_THROWS_AS(classify::knn_classify(sig({0.0, 0.0}, -1), gal, 2), ConfigError);
  CHECK_THROWS_AS(classify::knn_classify(sig({0.0, 0.0}, -1), gal, 0), ConfigError);
  CHECK_THROWS_AS(classify::knn_classify(sig({0.0, 0.0, 1.0}, -1), gal, 1), ConfigError);
}

TEST_CASE("neighbour fractions lay out over an explicit class list for fusion") {
  std::vector<GaitSignature> gal = {
      sig({0.0, 0.0}, 5), sig({0.1, 0.0}, 5), sig({0.2, 0.0}, 5),
      sig({1.0, 0.0}, 9), sig({4.0, 4.0}, 7),
  };
  auto r = classify::knn_classify(sig({0.0, 0.05}, -1), gal, 4);
  CHECK(r.subject == 5);

  auto s = classify::knn_score_vector(r, {5, 9, 7}, "probe0", "knn");
  REQUIRE(s.probs.size() == 3);
  CHECK(s.probs[0] == doctest::Approx(0.75));
  CHECK(s.probs[1] == doctest::Approx(0.25));
  CHECK(s.probs[2] == doctest::Approx(0.0));
  CHECK(s.normalized);

  // product-fusable with softmax evidence despite the hard zero
  auto fused = classify::fuse_product({s, sv({0.3, 0.4, 0.3})});
  CHECK(classify::argmax(fused.probs) == 0);

  CHECK_THROWS_AS(classify::knn_score_vector(r, {1, 2}), ConfigError);
  CHECK_THROWS_AS(classify::knn_score_vector(r, {}), ConfigError);
}

TEST_CASE("score lines round-trip through the aggregation type") {
  io::ScoreLine line{"vid3", "flow", {0.2, 0.3, 0.5}};
  auto s = classify::from_line(line);
  CHECK(s.source == "vid3");
  CHECK(s.modality == "flow");
  CHECK(s.normalized);

  io::ScoreLine counts{"vid4", "knn", {3.0, 1.0}};
  auto c = classify::from_line(counts);
  CHECK_FALSE(c.normalized);
  classify::normalize(c);
  CHECK(c.probs[0] == doctest::Approx(0.75));
  CHECK(c.normalized);

  auto back = classify::to_line(s);
  CHECK(back.video_id == "vid3");
  CHECK(back.probs == line.probs);

  auto zero = sv({0.0, 0.0});
  CHECK_THROWS_AS(classify::normalize(zero), NumericError);
}

TEST_CASE("argmax resolves ties toward the lowest index") {
  CHECK(classify::argmax({1.0, 3.0, 3.0}) == 1);
  CHECK(classify::argmax({2.0, 2.0}) == 0);
  CHECK_THROWS_AS(classify::argmax({}), ConfigError);
}
