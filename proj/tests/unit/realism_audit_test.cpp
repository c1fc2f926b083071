#include <doctest.h>

#include "support.hpp"
#include "synthabsa/audit.hpp"
#include "synthabsa/errors.hpp"
#include "synthabsa/realism.hpp"

using namespace synthabsa;
using namespace synthabsa::testing;

namespace {

DispatchOptions fast() {
  DispatchOptions d;
  d.initial_backoff = std::chrono::milliseconds(0);
  d.max_retries = 0;
  return d;
}

std::vector<ReviewRecord> pool_of(std::string prefix, int n, std::string state = "messier_realism") {
  std::vector<ReviewRecord> out;
  for (int i = 0; i < n; ++i) {
    auto r = make_record(prefix + std::to_string(i), prefix + " text " + std::to_string(i), {});
    r.meta.prompt_state_id = state;
    out.push_back(std::move(r));
  }
  return out;
}

std::string verdict(std::string_view decision) {
  return nlohmann::json{{"decision", decision}, {"confidence", 0.6}, {"cue_tags", nlohmann::json::array()},
                        {"justification", "because"}}
      .dump();
}

}  // namespace

TEST_CASE("cycle pool is balanced and blinded") {
  Rng rng(1);
  const auto real = pool_of("real", 40), syn = pool_of("syn", 40);
  const auto items = build_cycle_pool(real, syn, rng);
  CHECK(items.size() == 60);
  std::size_t r = 0;
  for (const auto& i : items) {
    r += i.hidden_source == ItemSource::real;
    CHECK(build_judge_prompt(i.text).find(i.id) == std::string::npos);
  }
  CHECK(r == 30);
  Rng rng2(1);
  CHECK_THROWS_WITH_AS(build_cycle_pool(pool_of("real", 10), syn, rng2), doctest::Contains("10"), ArgumentError);
  auto mixed = syn;
  mixed[3].meta.prompt_state_id = "other";
  CHECK_THROWS_AS(build_cycle_pool(real, mixed, rng2), ContractError);
}

TEST_CASE("judge verdict parsing is strict") {
  std::string err;
  const auto v = parse_judge_verdict(verdict("synthetic"), err);
  REQUIRE(v);
  CHECK(v->decision == ItemSource::synthetic);
  CHECK_FALSE(parse_judge_verdict(verdict("maybe"), err));
  CHECK_FALSE(parse_judge_verdict(R"({"decision":"real"})", err));
  CHECK_FALSE(parse_judge_verdict("real", err));
  auto j = nlohmann::json::parse(verdict("real"));
  j["confidence"] = 1.5;
  CHECK_FALSE(parse_judge_verdict(j.dump(), err));
}

TEST_CASE("unparseable answers are re-asked once, then abstain") {
  Rng rng(2);
  const auto items = build_cycle_pool(pool_of("real", 30), pool_of("syn", 30), rng);
  std::map<std::string, int> seen;
  std::mutex m;
  FunctionProvider judge([&](const CompletionRequest& r) {
    std::lock_guard lock(m);
    const int n = seen[r.prompt]++;
    // real items answer properly on the second try; synthetic never do
    const bool real = r.prompt.find("real text") != std::string::npos;
    return CompletionResponse{r.id, real && n > 0 ? verdict("real") : "not json", CompletionStatus::completed};
  });
  const auto verdicts = run_judge_cycle(judge, items, fast());
  const auto s = cycle_statistics(verdicts, items);
  CHECK(s.n_items == 60);
  CHECK(s.n_abstained == 30);
  CHECK(s.n_scored == 30);
  CHECK(s.correct == 30);
  CHECK(s.accuracy == 1.0);
  for (const auto& v : verdicts)
    if (!v.abstained()) CHECK(v.reasked);
}

TEST_CASE("equivalence check") {
  CHECK(equivalence_check(0.5, 1000, 0.10).passed);
  CHECK_FALSE(equivalence_check(0.5, 60, 0.10).passed);
  CHECK_FALSE(equivalence_check(0.9, 1000, 0.10).passed);
}

TEST_CASE("editor only fires on detections") {
  int calls = 0;
  FunctionProvider editor([&](const CompletionRequest& r) {
    ++calls;
    return CompletionResponse{r.id, "  New instruction.  ", CompletionStatus::completed};
  });
  const auto idle = editor_update(editor, "Old.", {}, fast());
  CHECK_FALSE(idle.triggered);
  CHECK(idle.instruction == "Old.");
  CHECK(calls == 0);
  JudgeVerdict v;
  v.item_id = "s1";
  v.decision = ItemSource::synthetic;
  v.cue_tags = {"too tidy"};
  const std::vector<JudgeVerdict> hits = {v};
  CHECK(build_editor_prompt("Old.", hits).find("too tidy") != std::string::npos);
  const auto fired = editor_update(editor, "Old.", hits, fast());
  CHECK(fired.triggered);
  CHECK(fired.instruction == "New instruction.");
  FunctionProvider dead([](const CompletionRequest&) -> CompletionResponse { throw TransportError("x"); });
  const auto failed = editor_update(dead, "Old.", hits, fast());
  CHECK_FALSE(failed.triggered);
  CHECK(failed.instruction == "Old.");
}

TEST_CASE("prompt state ids") {
  CHECK(prompt_state_id_for(final_prompt_state().instruction) == "messier_realism");
  const auto edited = prompt_state_id_for("Something new.");
  CHECK(edited.starts_with("edited-"));
  CHECK(edited == prompt_state_id_for("Something new."));
}

TEST_CASE("simulated realism loop runs end to end") {
  SimulatedOptions o;
  o.seed = 4;
  SimulatedProvider sim(o);
  const auto real = pool_of("real", 40, "");
  SyntheticSource source = [&](std::size_t c, const std::string& state, const std::string&) {
    return pool_of("c" + std::to_string(c) + "-syn", 30, state);
  };
  RealismConfig cfg;
  cfg.seed = 4;
  cfg.initial_instruction = final_prompt_state().instruction;
  cfg.dispatch = fast();
  const auto cycles = run_realism_cycles(sim, sim, real, source, cfg);
  REQUIRE(cycles.size() == 3);
  for (std::size_t c = 1; c < cycles.size(); ++c) CHECK(cycles[c].instruction_before == cycles[c - 1].instruction_after);
  CHECK(to_json(cycles[0]).contains("correctly_detected_synthetic"));
}

// ---------------------------------------------------------------------------

TEST_CASE("audit response parsing demands exactly the declared aspects") {
  const auto r = make_record("a", "text", {{"clarity", Sentiment::positive}, {"workload", Sentiment::negative}});
  std::string err;
  const auto ok = parse_audit_response(
      R"({"verdicts":{"clarity":{"supported":true,"sentiment_match":true},"workload":{"supported":false,"sentiment_match":false}}})",
      r, err);
  REQUIRE(ok);
  CHECK(ok->size() == 2);
  CHECK_FALSE(parse_audit_response(R"({"verdicts":{"clarity":{"supported":true,"sentiment_match":true}}})", r, err));
  CHECK_FALSE(parse_audit_response(
      R"({"verdicts":{"clarity":{"supported":true,"sentiment_match":true},"workload":{"supported":false,"sentiment_match":false},"materials":{"supported":true,"sentiment_match":true}}})",
      r, err));
  CHECK(build_audit_prompt(r).find("workload") != std::string::npos);
}

TEST_CASE("audit falls back to flagged unsupported verdicts") {
  const std::vector<ReviewRecord> sample = {make_record("a", "text", {{"clarity", Sentiment::positive}})};
  int calls = 0;
  FunctionProvider junk([&](const CompletionRequest& r) {
    ++calls;
    return CompletionResponse{r.id, "I think it is fine", CompletionStatus::completed};
  });
  const auto v = audit_reviews(junk, sample, fast());
  CHECK(calls == 2);
  REQUIRE(v.size() == 1);
  CHECK(v[0].flagged);
  CHECK_FALSE(v[0].supported);
  const auto rep = aggregate_audit(v, sample);
  CHECK(rep.n_flagged == 1);
  CHECK(verdicts_from_json(verdicts_to_json(v)).size() == 1);
}

TEST_CASE("aggregation refuses missing or stray verdicts") {
  const std::vector<ReviewRecord> sample = {make_record("a", "text", {{"clarity", Sentiment::positive}})};
  CHECK_THROWS_AS(aggregate_audit({}, sample), ArgumentError);
  const std::vector<AuditVerdict> stray = {{"a", "clarity", true, true, false}, {"a", "workload", true, true, false}};
  CHECK_THROWS_AS(aggregate_audit(stray, sample), ArgumentError);
}

TEST_CASE("simulated audit supports simulated reviews") {
  const auto c = simulated_corpus(60, 14);
  const auto sample = audit_sample(c.records, 20, 3);
  CHECK(sample.size() == 20);
  CHECK(audit_sample(c.records, 20, 3)[5].id == sample[5].id);
  SimulatedProvider sim;
  const auto rep = aggregate_audit(audit_reviews(sim, sample, fast()), sample);
  CHECK(rep.aspect_support_rate == 1.0);
  CHECK(rep.row_sentiment_match_rate == 1.0);
  CHECK(to_json(rep).contains("aspect_support_rate"));
}
