#include "gait/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "gait/errors.hpp"
#include "gait/io.hpp"

namespace gait::eval {

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr const char* kCsvHeader = "scenario,metric,accuracy,n";

}  // namespace

std::vector<int> ranking_from_scores(const std::vector<double>& scores) {
  if (scores.empty()) throw ConfigError("ranking_from_scores: no classes");
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
  });
  return idx;
}

double rank_k_accuracy(const std::vector<std::vector<int>>& rankings,
                       const std::vector<int>& truth, int k) {
  if (rankings.empty()) throw ConfigError("rank_k_accuracy: empty test set");
  if (rankings.size() != truth.size())
    throw ConfigError("rank_k_accuracy: " + std::to_string(rankings.size()) +
                      " rankings for " + std::to_string(truth.size()) + " labels");
  if (k < 1) throw ConfigError("rank_k_accuracy: k must be >= 1");

  int hits = 0;
  for (std::size_t s = 0; s < rankings.size(); ++s) {
    const std::vector<int>& r = rankings[s];
    if (r.empty()) throw ConfigError("rank_k_accuracy: empty ranking");
    std::unordered_set<int> seen(r.begin(), r.end());
    if (seen.size() != r.size())
      throw ConfigError("rank_k_accuracy: ranking repeats a class (sample " +
                        std::to_string(s) + ")");
    const auto top = static_cast<std::size_t>(std::min<int>(k, static_cast<int>(r.size())));
    for (std::size_t i = 0; i < top; ++i)
      if (r[i] == truth[s]) {
        ++hits;
        break;
      }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double weighted_average(const std::vector<double>& accuracies,
                        const std::vector<double>& weights) {
  if (accuracies.empty()) throw ConfigError("weighted_average: no cells");
  if (accuracies.size() != weights.size())
    throw ConfigError("weighted_average: " + std::to_string(accuracies.size()) +
                      " accuracies vs " + std::to_string(weights.size()) + " weights");
  double wa = 0.0, w = 0.0;
  for (std::size_t i = 0; i < accuracies.size(); ++i) {
    if (!(weights[i] > 0.0)) throw ConfigError("weighted_average: weights must be positive");
    wa += weights[i] * accuracies[i];
    w += weights[i];
  }
  return wa / w;
}

const Cell& EvalReport::cell(const std::string& scenario, const std::string& metric) const {
  for (const Cell& c : cells)
    if (c.scenario == scenario && c.metric == metric) return c;
  throw ConfigError("report has no cell (" + scenario + ", " + metric + ")");
}

bool EvalReport::has_cell(const std::string& scenario, const std::string& metric) const {
  for (const Cell& c : cells)
    if (c.scenario == scenario && c.metric == metric) return true;
  return false;
}

EvalReport evaluate(const std::vector<ScoredSample>& samples,
                    const std::map<std::string, double>* weights) {
  if (samples.empty()) throw ConfigError("evaluate: empty test set");
  const std::size_t classes = samples.front().scores.size();
  if (classes == 0) throw ConfigError("evaluate: zero classes");

  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ScoredSample& s = samples[i];
    if (s.scores.size() != classes)
      throw ConfigError("evaluate: inconsistent class count at sample " + std::to_string(i));
    if (s.truth < 0 || static_cast<std::size_t>(s.truth) >= classes)
      throw ConfigError("evaluate: label " + std::to_string(s.truth) + " outside 0.." +
                        std::to_string(classes - 1));
    if (s.scenario == "AVG") throw ConfigError("evaluate: scenario name AVG is reserved");
    groups[s.scenario].push_back(i);
  }

  const int k5 = std::min<int>(5, static_cast<int>(classes));

  EvalReport report;
  std::vector<double> r1s, r5s, ws;
  int total = 0;
  for (const auto& [scenario, idx] : groups) {
    std::vector<std::vector<int>> rankings;
    std::vector<int> truth;
    std::set<int> distinct;
    rankings.reserve(idx.size());
    for (std::size_t i : idx) {
      rankings.push_back(ranking_from_scores(samples[i].scores));
      truth.push_back(samples[i].truth);
      distinct.insert(samples[i].truth);
    }
    const double r1 = rank_k_accuracy(rankings, truth, 1);
    const double r5 = rank_k_accuracy(rankings, truth, k5);
    const int n = static_cast<int>(idx.size());
    report.cells.push_back({scenario, "R1", r1, n});
    report.cells.push_back({scenario, "R5", r5, n});

    double w = static_cast<double>(distinct.size());
    if (weights) {
      auto it = weights->find(scenario);
      if (it == weights->end())
        throw ConfigError("evaluate: no weight given for scenario '" + scenario + "'");
      w = it->second;
      if (!(w > 0.0)) throw ConfigError("evaluate: weight for '" + scenario + "' not positive");
    }
    report.avg_weights[scenario] = w;
    r1s.push_back(r1);
    r5s.push_back(r5);
    ws.push_back(w);
    total += n;
  }

  report.cells.push_back({"AVG", "R1", weighted_average(r1s, ws), total});
  report.cells.push_back({"AVG", "R5", weighted_average(r5s, ws), total});
  if (k5 < 5)
    report.footnotes.push_back("rank-5 clamped to rank-" + std::to_string(k5) + " (" +
                               std::to_string(classes) + " classes)");
  return report;
}

std::string to_csv(const EvalReport& report) {
  std::ostringstream out;
  out << kCsvHeader << "\n";
  out << "# config_hash " << report.config_hash << "\n";
  out << "# seed " << report.seed << "\n";
  for (const auto& [scenario, w] : report.avg_weights)
    out << "# weight " << scenario << " " << g17(w) << "\n";
  for (const std::string& f : report.footnotes) out << "# footnote " << f << "\n";
  for (const Cell& c : report.cells)
    out << c.scenario << "," << c.metric << "," << g17(c.accuracy) << "," << c.n << "\n";
  return out.str();
}

EvalReport parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw IoError("report CSV: bad header '" + line + "'");

  EvalReport report;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream meta(line.substr(1));
      std::string tag;
      meta >> tag;
      if (tag == "config_hash")
        meta >> report.config_hash;
      else if (tag == "seed")
        meta >> report.seed;
      else if (tag == "weight") {
        std::string scenario;
        double w = 0.0;
        meta >> scenario >> w;
        report.avg_weights[scenario] = w;
      } else if (tag == "footnote") {
        std::string rest;
        std::getline(meta, rest);
        report.footnotes.push_back(rest.empty() ? rest : rest.substr(1));
      }
      if (meta.fail())
        throw IoError("report CSV: bad metadata at line " + std::to_string(lineno));
      continue;
    }
    Cell c;
    std::istringstream row(line);
    std::string field;
    if (!std::getline(row, c.scenario, ',') || !std::getline(row, c.metric, ','))
      throw IoError("report CSV: malformed row at line " + std::to_string(lineno));
    if (!std::getline(row, field, ','))
      throw IoError("report CSV: missing accuracy at line " + std::to_string(lineno));
    try {
      c.accuracy = std::stod(field);
      if (!std::getline(row, field)) throw std::invalid_argument("n");
      c.n = std::stoi(field);
    } catch (const std::exception&) {
      throw IoError("report CSV: bad number at line " + std::to_string(lineno));
    }
    report.cells.push_back(std::move(c));
  }
  return report;
}

std::string to_text(const EvalReport& report) {
  std::vector<std::string> scenarios;
  for (const Cell& c : report.cells)
    if (c.scenario != "AVG" &&
        std::find(scenarios.begin(), scenarios.end(), c.scenario) == scenarios.end())
      scenarios.push_back(c.scenario);
  if (report.has_cell("AVG", "R1")) scenarios.push_back("AVG");

  std::vector<std::string> metrics;
  for (const Cell& c : report.cells)
    if (std::find(metrics.begin(), metrics.end(), c.metric) == metrics.end())
      metrics.push_back(c.metric);

  std::ostringstream out;
  out << std::left << std::setw(8) << "metric" << std::right;
  std::vector<int> width;
  for (const std::string& s : scenarios) {
    width.push_back(std::max<int>(7, static_cast<int>(s.size()) + 2));
    out << std::setw(width.back()) << s;
  }
  out << "\n";
  out << std::fixed << std::setprecision(1);
  for (const std::string& m : metrics) {
    out << std::left << std::setw(8) << m << std::right;
    for (std::size_t i = 0; i < scenarios.size(); ++i)
      out << std::setw(width[i]) << report.cell(scenarios[i], m).accuracy;
    out << "\n";
  }
  if (!metrics.empty()) {
    out << std::left << std::setw(8) << "n" << std::right;
    for (std::size_t i = 0; i < scenarios.size(); ++i)
      out << std::setw(width[i]) << report.cell(scenarios[i], metrics.front()).n;
    out << "\n";
  }
  for (const std::string& f : report.footnotes) out << "note: " << f << "\n";
  return out.str();
}

void emit_report(const EvalReport& report, const std::string& path, const std::string& format) {
  if (format == "csv")
    io::write_text_atomic(path, to_csv(report));
  else if (format == "text")
    io::write_text_atomic(path, to_text(report));
  else
    throw ConfigError("emit_report: unknown format '" + format + "' (csv|text)");
}

}  // namespace gait::eval
