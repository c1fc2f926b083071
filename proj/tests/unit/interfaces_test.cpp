// Contracts shared with externally trained encoder models: the score file,
// the evaluation report and the corpus JSONL.

#include <doctest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "synthabsa/cli.hpp"
#include "synthabsa/errors.hpp"
#include "synthabsa/metrics.hpp"

using namespace synthabsa;
using namespace synthabsa::testing;
namespace fs = std::filesystem;

namespace {

void write_lines(const fs::path& p, std::initializer_list<std::string_view> lines) {
  std::ofstream f(p);
  for (auto l : lines) f << l << "\n";
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  return dispatch(args, out, err);
}

}  // namespace

TEST_CASE("score files round-trip") {
  const auto dir = scratch_dir("scores-roundtrip");
  const std::vector<ScoreRow> rows = {{"a", {{"clarity", 0.25}, {"workload", 1.0}}, {{"clarity", -0.5}}},
                                      {"b", {}, {}}};
  write_score_file(rows, dir / "s.jsonl");
  CHECK(read_score_file(dir / "s.jsonl") == rows);
}

TEST_CASE("score file validation names the line") {
  const auto dir = scratch_dir("scores-bad");
  write_lines(dir / "range.jsonl", {R"({"id":"a","probabilities":{"clarity":0.5},"sentiments":{}})",
                                    R"({"id":"b","probabilities":{"clarity":1.5},"sentiments":{}})"});
  try {
    read_score_file(dir / "range.jsonl");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  write_lines(dir / "sent.jsonl", {R"({"id":"a","probabilities":{},"sentiments":{"clarity":-2}})"});
  CHECK_THROWS_AS(read_score_file(dir / "sent.jsonl"), ParseError);
  write_lines(dir / "noid.jsonl", {R"({"probabilities":{},"sentiments":{}})"});
  CHECK_THROWS_AS(read_score_file(dir / "noid.jsonl"), ParseError);
}

TEST_CASE("external scores calibrate and evaluate like native ones") {
  const auto dir = scratch_dir("external-scores");
  auto p = [&](const char* f) { return (dir / f).string(); };
  auto corpus = simulated_corpus(200, 21);
  save_corpus(corpus, p("c.jsonl"));
  // A perfect external model: probability 1 for gold aspects, gold sentiment.
  std::vector<ScoreRow> rows;
  for (const auto& r : corpus.records) {
    ScoreRow s{r.id, {}, {}};
    for (const auto& a : default_aspect_inventory().ids()) s.probabilities[a] = 0.0;
    for (const auto& e : r.labels) {
      s.probabilities[e.aspect] = 1.0;
      s.sentiments[e.aspect] = sentiment_value(e.sentiment);
    }
    rows.push_back(s);
  }
  write_score_file(rows, p("s.jsonl"));
  REQUIRE(cli({"calibrate", "--in", p("c.jsonl"), "--scores", p("s.jsonl"), "--out", p("t.json")}) == 0);
  REQUIRE(cli({"evaluate", "--in", p("c.jsonl"), "--scores", p("s.jsonl"), "--thresholds", p("t.json"), "--approach",
               "encoder_stub", "--out", p("r.json")}) == 0);
  std::ifstream f(p("r.json"));
  const auto report = eval_report_from_json(nlohmann::json::parse(f));
  CHECK(report.approach == "encoder_stub");
  CHECK(report.detection.aggregates.micro_f1 == 1.0);
  CHECK(*report.sentiment.mse == 0.0);
  CHECK(report.split_id == split_id(records_in_split(corpus, Split::test), Split::test));

  // Missing test ids in the score file are refused.
  const auto test = records_in_split(corpus, Split::test);
  std::vector<ScoreRow> no_test;
  for (const auto& r : rows)
    if (r.id != test.front().id) no_test.push_back(r);
  write_score_file(no_test, p("gap.jsonl"));
  CHECK(cli({"evaluate", "--in", p("c.jsonl"), "--scores", p("gap.jsonl"), "--thresholds", p("t.json"), "--out",
             p("gap.json")}) != 0);
}

TEST_CASE("eval report schema carries the shared fields") {
  const std::vector<LabelSet> gold = {{{"clarity", Sentiment::positive}}};
  const std::vector<AspectSet> pred = {{"clarity"}};
  const std::vector<SentimentScores> s = {{{"clarity", 1.0}}};
  auto r = evaluate_predictions("m", gold, pred, s, default_aspect_inventory().ids());
  r.split_id = "test-1-x";
  r.provenance = {{"seed", 42}};
  const auto j = to_json(r);
  for (const char* key : {"schema", "approach", "split_id", "n_reviews", "aspects", "aggregates", "sentiment", "per_aspect",
                          "provenance"})
    CHECK_MESSAGE(j.contains(key), key);
  const auto back = eval_report_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.provenance["seed"] == 42);
  CHECK(back.aspects.size() == 20);
}

TEST_CASE("corpus JSONL is readable line by line as plain JSON") {
  const auto dir = scratch_dir("corpus-jsonl");
  const auto corpus = simulated_corpus(30, 22);
  save_corpus(corpus, dir / "c.jsonl");
  std::ifstream f(dir / "c.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"id", "text", "labels", "split"}) CHECK_MESSAGE(j.contains(key), key);
    ++n;
  }
  CHECK(n == 30);
}
