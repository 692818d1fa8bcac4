#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

/// Rank-k accuracy tables: per-scenario R1/R5 cells, class-count-weighted
/// averages, and deterministic CSV / text renderings of the result grid.
namespace gait::eval {

/// Descending-score class ordering; equal scores rank the lower index first.
std::vector<int> ranking_from_scores(const std::vector<double>& scores);

/// Percentage of samples whose true class sits in the top k of its ranking.
/// k is clamped to each ranking's length; rankings must not repeat a class.
double rank_k_accuracy(const std::vector<std::vector<int>>& rankings,
                       const std::vector<int>& truth, int k);

/// sum(w_i * a_i) / sum(w_i) over positive weights.
double weighted_average(const std::vector<double>& accuracies,
                        const std::vector<double>& weights);

struct Cell {
  std::string scenario;
  std::string metric;  // "R1" or "R5"
  double accuracy = 0.0;
  int n = 0;  // samples behind the cell; the AVG row carries the total

  friend bool operator==(const Cell&, const Cell&) = default;
};

/// The result grid: scenario cells in deterministic order plus an AVG group
/// recomputable from the per-scenario cells and the stored weights.
struct EvalReport {
  std::vector<Cell> cells;
  std::map<std::string, double> avg_weights;  // scenario -> weight
  std::vector<std::string> footnotes;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  const Cell& cell(const std::string& scenario, const std::string& metric) const;
  bool has_cell(const std::string& scenario, const std::string& metric) const;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// One evaluated video: per-class scores, the true class, and the scenario
/// bucket it reports under.
struct ScoredSample {
  std::string scenario;
  std::vector<double> scores;
  int truth = -1;
};

/// Builds R1/R5 cells per scenario plus the weighted AVG group. Weights
/// default to the number of distinct test classes per scenario; pass
/// `weights` to override. R5 silently becomes rank-min(5, C) for narrow
/// class sets, with a footnote.
EvalReport evaluate(const std::vector<ScoredSample>& samples,
                    const std::map<std::string, double>* weights = nullptr);

/// Header `scenario,metric,accuracy,n`; metadata and weights ride along as
/// '#' comment lines; accuracies at full precision so parsing is lossless.
std::string to_csv(const EvalReport& report);
EvalReport parse_csv(const std::string& text);

/// Fixed-point table, metrics as rows and scenarios as columns.
std::string to_text(const EvalReport& report);

/// Writes the chosen rendering ("csv" or "text") atomically.
void emit_report(const EvalReport& report, const std::string& path, const std::string& format);

}  // namespace gait::eval
