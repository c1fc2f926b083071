#include <doctest.h>

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "synthabsa/cli.hpp"
#include "synthabsa/errors.hpp"
#include "synthabsa/report.hpp"
#include "synthabsa/stats.hpp"

using namespace synthabsa;
using namespace synthabsa::testing;
namespace fs = std::filesystem;

namespace {

EvalReport report_with(std::string approach, double hit_rate, std::string split = "test-10-x") {
  const auto ids = default_aspect_inventory().ids();
  Rng rng(fnv1a64(approach));
  std::vector<LabelSet> gold;
  std::vector<AspectSet> pred;
  std::vector<SentimentScores> s;
  for (int i = 0; i < 50; ++i) {
    gold.push_back(random_labels(rng));
    AspectSet p;
    SentimentScores sc;
    for (const auto& e : gold.back())
      if (rng.uniform01() < hit_rate) p.insert(e.aspect), sc[e.aspect] = 0.0;
    pred.push_back(p);
    s.push_back(sc);
  }
  auto r = evaluate_predictions(std::move(approach), gold, pred, s, ids);
  r.split_id = std::move(split);
  return r;
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read(const fs::path& p) {
  std::ifstream f(p);
  return nlohmann::json::parse(f);
}

}  // namespace

TEST_CASE("benchmark ranking is by micro-F1") {
  const std::vector<EvalReport> reports = {report_with("weak", 0.3), report_with("strong", 0.9),
                                           report_with("middle", 0.6)};
  const auto b = emit_report(reports, default_aspect_inventory());
  REQUIRE(b.rows.size() == 3);
  CHECK(b.rows[0].approach == "strong");
  CHECK(b.rows[2].approach == "weak");
  CHECK(b.rows[1].rank == 2);
  CHECK(b.diagnostics[0].approach == "strong");
  const auto j = to_json(b);
  CHECK(j["ranking"][0].contains("Micro-F1"));
  CHECK(j["ranking"][0]["Runtime (min)"].is_null());
  CHECK(j["strongest_aspects"].size() == 15);
  CHECK(render_table(b).find("strong") != std::string::npos);
}

TEST_CASE("reports from different splits do not merge") {
  const std::vector<EvalReport> reports = {report_with("a", 0.5), report_with("b", 0.5, "test-10-y")};
  CHECK_THROWS_AS(emit_report(reports, default_aspect_inventory()), ContractError);
  CHECK_THROWS_AS(emit_report({}, default_aspect_inventory()), ArgumentError);
}

TEST_CASE("aspect extremes") {
  const auto r = report_with("a", 0.5);
  const auto e = aspect_extremes(r, default_aspect_inventory(), 5);
  REQUIRE(e.strongest.size() == 5);
  CHECK(e.strongest.front().f1 >= e.strongest.back().f1);
  CHECK(e.weakest.front().f1 <= e.weakest.back().f1);
  CHECK(e.strongest.front().f1 >= e.weakest.front().f1);
  CHECK_FALSE(e.strongest.front().group.empty());
}

TEST_CASE("stability summary uses the sample standard deviation") {
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<EvalReport> done;
  const auto s = seed_sweep("x", seeds, [](std::uint64_t seed) { return report_with("x" + std::to_string(seed), 0.5); },
                            &done);
  CHECK(done.size() == 3);
  std::vector<double> f1;
  for (const auto& r : done) f1.push_back(r.detection.aggregates.micro_f1);
  CHECK(s.micro_f1_mean == doctest::Approx(sample_mean(f1)));
  CHECK(s.micro_f1_std == doctest::Approx(sample_std(f1)));
  CHECK(to_json(s)["Seeds"].size() == 3);
  const std::vector<std::uint64_t> one = {1};
  CHECK_THROWS_AS(seed_sweep("x", one, [](std::uint64_t) { return report_with("x", 0.5); }, nullptr), ArgumentError);
}

TEST_CASE("a failing seed keeps completed runs") {
  const std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<EvalReport> done;
  auto run = [](std::uint64_t seed) {
    if (seed == 3) throw std::runtime_error("diverged");
    return report_with("x", 0.5);
  };
  CHECK_THROWS(seed_sweep("x", seeds, run, &done));
  CHECK(done.size() == 2);
}

TEST_CASE("run config rejects unknown keys and round-trips") {
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"sed", 1}}), SchemaError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"tfidf", {{"learning_rate", 1}}}}), SchemaError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"seed", "forty-two"}}), SchemaError);
  RunConfig c;
  c.seed = 9;
  c.cycles = 5;
  c.tfidf.detector_l2 = 0.5;
  const auto back = run_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(RunConfig{}) != config_hash(c));
}

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"generate"}).code == 2);  // --out required
  CHECK(cli({"prompt-eval", "--in", "x", "--out", "y", "--mode", "telepathy"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("generate, split and evaluate through the CLI") {
  const auto dir = scratch_dir("cli-flow");
  auto p = [&](const char* f) { return (dir / f).string(); };
  REQUIRE(cli({"generate", "--seed", "3", "--n", "120", "--out", p("c.jsonl")}).code == 0);
  const auto manifest = read(p("c.jsonl.run.json"));
  CHECK(manifest["command"] == "generate");
  CHECK(manifest["config"]["seed"] == 3);
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  REQUIRE(cli({"split", "--in", p("c.jsonl")}).code == 0);
  REQUIRE(cli({"train-tfidf", "--in", p("c.jsonl"), "--out", p("m.json")}).code == 0);
  const auto ev = cli({"evaluate", "--in", p("c.jsonl"), "--model", p("m.json"), "--out", p("r.json"), "--scores-out",
                       p("s.jsonl")});
  REQUIRE(ev.code == 0);
  CHECK(ev.err.find("event=start") != std::string::npos);
  const auto r = read(p("r.json"));
  CHECK(r["split_id"].get<std::string>().starts_with("test-12-"));
  CHECK(read_score_file(p("s.jsonl")).size() == 12);
  // Evaluating an untagged corpus is a failure, not a crash.
  REQUIRE(cli({"generate", "--n", "10", "--out", p("raw.jsonl")}).code == 0);
  CHECK(cli({"evaluate", "--in", p("raw.jsonl"), "--model", p("m.json"), "--out", p("bad.json")}).code != 0);
}

TEST_CASE("config file drives the pilot gate exit status") {
  const auto dir = scratch_dir("cli-pilot");
  {
    std::ofstream f(dir / "bad.json");
    f << R"({"stub": {"empty_every": 3}})";
  }
  CHECK(cli({"pilot-gate", "--out", (dir / "ok.json").string()}).code == 0);
  CHECK(read(dir / "ok.json")["n_reviews"] == 25);
  CHECK(cli({"pilot-gate", "--n", "10", "--out", (dir / "ten.json").string()}).code == 0);
  CHECK(read(dir / "ten.json")["n_reviews"] == 10);
  CHECK(cli({"--config", (dir / "bad.json").string(), "pilot-gate", "--out", (dir / "fail.json").string()}).code == 1);
  CHECK(read(dir / "fail.json")["passed"] == false);
  {
    std::ofstream f(dir / "typo.json");
    f << R"({"stub": {"empty_evry": 3}})";
  }
  CHECK(cli({"--config", (dir / "typo.json").string(), "pilot-gate", "--out", (dir / "x.json").string()}).code == 1);
}

TEST_CASE("http provider without an endpoint is a usage error") {
  const auto dir = scratch_dir("cli-http");
  {
    std::ofstream f(dir / "cfg.json");
    f << R"({"provider": {"kind": "http", "endpoint_env": "SYNTHABSA_TEST_UNSET_ENDPOINT"}})";
  }
  CHECK(cli({"--config", (dir / "cfg.json").string(), "pilot-gate", "--out", (dir / "p.json").string()}).code == 2);
}
