#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "gait/errors.hpp"
#include "gait/eval.hpp"
#include "gait/io.hpp"
#include "gait/rng.hpp"

using namespace gait;
using eval::Cell;
using eval::EvalReport;
using eval::ScoredSample;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& n) const { return (path / n).string(); }
};

// scores that rank class `truth` at 0-based position `pos`, all distinct
std::vector<double> place(int classes, int truth, int pos) {
  std::vector<int> order;
  for (int c = 0; c < classes; ++c)
    if (c != truth) order.push_back(c);
  order.insert(order.begin() + pos, truth);
  std::vector<double> s(static_cast<size_t>(classes));
  for (int r = 0; r < classes; ++r) s[(size_t)order[(size_t)r]] = 1.0 - 0.05 * r;
  return s;
}

std::vector<std::vector<int>> rankings_of(const std::vector<ScoredSample>& samples) {
  std::vector<std::vector<int>> r;
  for (const auto& s : samples) r.push_back(eval::ranking_from_scores(s.scores));
  return r;
}

}  // namespace

TEST_CASE("46 correct out of 100 scores exactly 46.0 percent at rank 1") {
  std::vector<std::vector<int>> rankings;
  std::vector<int> truth;
  for (int i = 0; i < 100; ++i) {
    rankings.push_back({3, 1, 0, 2, 4, 5, 6, 7});
    truth.push_back(i < 46 ? 3 : 1);  // 46 at the top, 54 one slot down
  }
  CHECK(eval::rank_k_accuracy(rankings, truth, 1) == 46.0);
  CHECK(eval::rank_k_accuracy(rankings, truth, 2) == 100.0);
}

TEST_CASE("rank equal to the class count always scores 100") {
  Rng rng(5);
  std::vector<std::vector<int>> rankings;
  std::vector<int> truth;
  for (int i = 0; i < 30; ++i) {
    std::vector<int> r = {0, 1, 2, 3, 4, 5};
    rng.shuffle(r);
    rankings.push_back(r);
    truth.push_back((int)rng.next_below(6));
  }
  CHECK(eval::rank_k_accuracy(rankings, truth, 6) == 100.0);
  CHECK(eval::rank_k_accuracy(rankings, truth, 17) == 100.0);  // k clamps
}

TEST_CASE("uniform guessing lands near 1/C at rank 1 and 5/C at rank 5") {
  Rng rng(99);
  const int n = 10000, classes = 10;
  std::vector<std::vector<int>> rankings;
  std::vector<int> truth;
  for (int i = 0; i < n; ++i) {
    std::vector<double> s((size_t)classes);
    for (double& v : s) v = rng.next_unit();
    rankings.push_back(eval::ranking_from_scores(s));
    truth.push_back((int)rng.next_below(classes));
  }
  const double r1 = eval::rank_k_accuracy(rankings, truth, 1);
  const double r5 = eval::rank_k_accuracy(rankings, truth, 5);
  CHECK(r1 > 8.0);
  CHECK(r1 < 12.0);
  CHECK(r5 > 47.0);
  CHECK(r5 < 53.0);
}

TEST_CASE("equal weights reproduce the three-scenario average of 86.0") {
  CHECK(eval::weighted_average({98.0, 97.0, 63.0}, {1.0, 1.0, 1.0}) == 86.0);
  CHECK(eval::weighted_average({98.0, 97.0, 63.0}, {7.0, 7.0, 7.0}) == 86.0);
}

TEST_CASE("a single scenario averages to itself") {
  CHECK(eval::weighted_average({73.25}, {155.0}) == 73.25);
}

TEST_CASE("class-count weights match a spreadsheet recomputation") {
  const std::vector<double> acc = {99.9, 97.2, 88.7, 94.4, 81.3, 60.4};
  const std::vector<double> w = {155, 155, 155, 16, 16, 16};
  CHECK(eval::weighted_average(acc, w) ==
        doctest::Approx(93.71656920077973).epsilon(1e-12));
}

TEST_CASE("degenerate weighted averages are rejected") {
  CHECK_THROWS_AS(eval::weighted_average({90.0}, {1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(eval::weighted_average({}, {}), ConfigError);
  CHECK_THROWS_AS(eval::weighted_average({90.0, 80.0}, {1.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(eval::weighted_average({90.0, 80.0}, {1.0, -2.0}), ConfigError);
}

TEST_CASE("rank accuracy rejects malformed inputs") {
  std::vector<std::vector<int>> ok = {{0, 1, 2}};
  CHECK_THROWS_AS(eval::rank_k_accuracy({}, {}, 1), ConfigError);
  CHECK_THROWS_AS(eval::rank_k_accuracy(ok, {0, 1}, 1), ConfigError);
  CHECK_THROWS_AS(eval::rank_k_accuracy(ok, {0}, 0), ConfigError);
  CHECK_THROWS_AS(eval::rank_k_accuracy({{0, 1, 1}}, {0}, 1), ConfigError);
  CHECK_THROWS_AS(eval::rank_k_accuracy({{}}, {0}, 1), ConfigError);
}

TEST_CASE("score ties rank the lower class first") {
  CHECK((eval::ranking_from_scores({0.2, 0.5, 0.3}) == std::vector<int>{1, 2, 0}));
  CHECK((eval::ranking_from_scores({0.4, 0.4, 0.2}) == std::vector<int>{0, 1, 2}));
  CHECK_THROWS_AS(eval::ranking_from_scores({}), ConfigError);
}

TEST_CASE("perfect and constant-wrong classifiers hit the scale ends") {
  std::vector<std::vector<int>> rankings;
  std::vector<int> truth;
  for (int i = 0; i < 25; ++i) {
    rankings.push_back({i % 4, (i + 1) % 4, (i + 2) % 4, (i + 3) % 4});
    truth.push_back(i % 4);
  }
  CHECK(eval::rank_k_accuracy(rankings, truth, 1) == 100.0);
  for (auto& t : truth) t = (t + 1) % 4;  // every prediction now misses
  CHECK(eval::rank_k_accuracy(rankings, truth, 1) == 0.0);
}

TEST_CASE("rank-5 accuracy never drops below rank-1") {
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    Rng rng(seed);
    std::vector<std::vector<int>> rankings;
    std::vector<int> truth;
    for (int i = 0; i < 200; ++i) {
      std::vector<double> s(12);
      for (double& v : s) v = rng.next_unit();
      rankings.push_back(eval::ranking_from_scores(s));
      truth.push_back((int)rng.next_below(12));
    }
    CHECK(eval::rank_k_accuracy(rankings, truth, 5) >=
          eval::rank_k_accuracy(rankings, truth, 1));
  }
}

TEST_CASE("evaluation builds per-scenario cells plus a class-weighted average") {
  std::vector<ScoredSample> samples = {
      {"nm", place(6, 0, 0), 0}, {"nm", place(6, 1, 0), 1},
      {"nm", place(6, 2, 0), 2}, {"nm", place(6, 0, 1), 0},
      {"bg", place(6, 3, 0), 3}, {"bg", place(6, 4, 5), 4},
  };
  auto report = eval::evaluate(samples);

  REQUIRE(report.cells.size() == 6);
  CHECK((report.cells[0] == Cell{"bg", "R1", 50.0, 2}));
  CHECK((report.cells[1] == Cell{"bg", "R5", 50.0, 2}));
  CHECK((report.cells[2] == Cell{"nm", "R1", 75.0, 4}));
  CHECK((report.cells[3] == Cell{"nm", "R5", 100.0, 4}));
  // weights: three distinct nm identities vs two bg -> (3*75 + 2*50) / 5
  CHECK((report.cells[4] == Cell{"AVG", "R1", 65.0, 6}));
  CHECK((report.cells[5] == Cell{"AVG", "R5", 80.0, 6}));
  CHECK(report.avg_weights.at("nm") == 3.0);
  CHECK(report.avg_weights.at("bg") == 2.0);
  CHECK(report.footnotes.empty());

  for (const auto& [scenario, w] : report.avg_weights)
    CHECK(report.cell(scenario, "R5").accuracy >= report.cell(scenario, "R1").accuracy);
}

TEST_CASE("narrow class sets clamp rank-5 and say so") {
  std::vector<ScoredSample> samples = {
      {"nm", place(3, 0, 0), 0},
      {"nm", place(3, 1, 2), 1},
  };
  auto report = eval::evaluate(samples);
  CHECK(report.cell("nm", "R1").accuracy == 50.0);
  CHECK(report.cell("nm", "R5").accuracy == 100.0);  // k = 3 covers everything
  REQUIRE(report.footnotes.size() == 1);
  CHECK(report.footnotes[0].find("rank-3") != std::string::npos);
}

TEST_CASE("explicit average weights override the class-count default") {
  std::vector<ScoredSample> samples = {
      {"nm", place(6, 0, 0), 0}, {"nm", place(6, 1, 0), 1},
      {"nm", place(6, 2, 0), 2}, {"nm", place(6, 0, 1), 0},
      {"bg", place(6, 3, 0), 3}, {"bg", place(6, 4, 5), 4},
  };
  std::map<std::string, double> w = {{"nm", 1.0}, {"bg", 3.0}};
  auto report = eval::evaluate(samples, &w);
  CHECK(report.cell("AVG", "R1").accuracy == doctest::Approx(56.25).epsilon(1e-12));

  std::map<std::string, double> missing = {{"nm", 1.0}};
  CHECK_THROWS_AS(eval::evaluate(samples, &missing), ConfigError);
  std::map<std::string, double> bad = {{"nm", 1.0}, {"bg", 0.0}};
  CHECK_THROWS_AS(eval::evaluate(samples, &bad), ConfigError);
}

TEST_CASE("evaluation rejects inconsistent sample sets") {
  CHECK_THROWS_AS(eval::evaluate({}), ConfigError);
  std::vector<ScoredSample> mixed = {{"nm", place(6, 0, 0), 0}, {"nm", place(4, 0, 0), 0}};
  CHECK_THROWS_AS(eval::evaluate(mixed), ConfigError);
  std::vector<ScoredSample> range = {{"nm", place(6, 0, 0), 6}};
  CHECK_THROWS_AS(eval::evaluate(range), ConfigError);
  std::vector<ScoredSample> reserved = {{"AVG", place(6, 0, 0), 0}};
  CHECK_THROWS_AS(eval::evaluate(reserved), ConfigError);
}

TEST_CASE("CSV rendering is lossless and byte-stable") {
  std::vector<ScoredSample> samples = {
      {"nm", place(6, 0, 0), 0}, {"nm", place(6, 1, 0), 1},
      {"bg", place(6, 3, 0), 3}, {"bg", place(6, 4, 5), 4},
  };
  auto report = eval::evaluate(samples);
  report.config_hash = 123456789012345ULL;
  report.seed = 42;
  report.footnotes.push_back("synthetic smoke run");

  const std::string csv = eval::to_csv(report);
  CHECK(csv.rfind("scenario,metric,accuracy,n\n", 0) == 0);

  auto parsed = eval::parse_csv(csv);
  CHECK(parsed == report);
  CHECK(eval::to_csv(parsed) == csv);  // byte-identical re-render

  CHECK_THROWS_AS(eval::parse_csv("metric,scenario\n"), IoError);
  CHECK_THROWS_AS(eval::parse_csv("scenario,metric,accuracy,n\nnm,R1,abc,2\n"), IoError);
}

TEST_CASE("an empty report renders as a bare header") {
  EvalReport empty;
  const std::string csv = eval::to_csv(empty);
  CHECK(csv == "scenario,metric,accuracy,n\n# config_hash 0\n# seed 0\n");
  CHECK(eval::parse_csv(csv).cells.empty());
}

TEST_CASE("the text table carries scenarios as columns and metrics as rows") {
  std::vector<ScoredSample> samples = {
      {"nm", place(6, 0, 0), 0}, {"nm", place(6, 1, 0), 1},
      {"bg", place(6, 3, 0), 3}, {"bg", place(6, 4, 5), 4},
  };
  auto report = eval::evaluate(samples);
  report.footnotes.push_back("demo");
  const std::string text = eval::to_text(report);
  CHECK(text.find("metric") != std::string::npos);
  CHECK(text.find("nm") != std::string::npos);
  CHECK(text.find("bg") != std::string::npos);
  CHECK(text.find("AVG") != std::string::npos);
  CHECK(text.find("100.0") != std::string::npos);
  CHECK(text.find("note: demo") != std::string::npos);
  CHECK(text.find('\n') != std::string::npos);
}

TEST_CASE("reports are written atomically in both formats") {
  TempDir tmp("gait_eval_io");
  std::vector<ScoredSample> samples = {{"nm", place(6, 0, 0), 0}, {"nm", place(6, 1, 1), 1}};
  auto report = eval::evaluate(samples);

  eval::emit_report(report, tmp.file("r.csv"), "csv");
  eval::emit_report(report, tmp.file("r.txt"), "text");
  CHECK(eval::parse_csv(io::read_text(tmp.file("r.csv"))) == report);
  CHECK(io::read_text(tmp.file("r.txt")) == eval::to_text(report));
  CHECK_THROWS_AS(eval::emit_report(report, tmp.file("r.x"), "xml"), ConfigError);

  for (const auto& e : std::filesystem::directory_iterator(tmp.path))
    CHECK(e.path().extension() != ".tmp");
}
