#include <doctest.h>

#include "support.hpp"
#include "synthabsa/errors.hpp"
#include "synthabsa/prompting.hpp"

using namespace synthabsa;
using namespace synthabsa::testing;

namespace {
const AspectInventory& inv() { return default_aspect_inventory(); }
}

TEST_CASE("strict parser accepts the exact contract") {
  const auto ok = parse_structured_output(R"({"clarity": "positive", "workload": "negative"})", inv());
  CHECK(ok.valid);
  CHECK(ok.labels.size() == 2);
  CHECK(parse_structured_output(" {} \n", inv()).valid);
}

TEST_CASE("strict parser rejects everything else whole") {
  for (const char* raw : {
           R"({"clarity": "positive", "parking": "negative"})",
           R"({"clarity": "mixed"})",
           R"({"clarity": 1})",
           R"({"clarity": "positive", "clarity": "negative"})",
           R"({"clarity": "positive"} trailing)",
           R"(```json {"clarity": "positive"} ```)",
           R"(["clarity"])",
           "",
       }) {
    const auto p = parse_structured_output(raw, inv());
    CHECK_MESSAGE(!p.valid, raw);
    CHECK(p.labels.empty());
    CHECK_FALSE(p.error.empty());
  }
}

TEST_CASE("decomposed-mode parsers") {
  CHECK(parse_aspect_list(R"(["clarity", "workload"])", inv())->size() == 2);
  CHECK_FALSE(parse_aspect_list(R"(["clarity", "clarity"])", inv()));
  CHECK_FALSE(parse_aspect_list(R"(["parking"])", inv()));
  CHECK(parse_yes_no(" yes\n") == true);
  CHECK(parse_yes_no("no") == false);
  CHECK_FALSE(parse_yes_no("Yes."));
  CHECK(parse_ternary(" neutral ") == Sentiment::neutral);
  CHECK_FALSE(parse_ternary("neutral-ish"));
}

TEST_CASE("prompts wrap the query and round-trip it") {
  const std::string review = "The lecturer was clear.\nThe exams were fair.";
  for (const auto& p : {build_inference_prompt(review, {}, inv()), build_detection_prompt(review, inv()),
                        build_presence_prompt(review, "clarity"), build_aspect_sentiment_prompt(review, "clarity")})
    CHECK(extract_query(p) == review);
  CHECK(build_presence_prompt(review, "clarity").starts_with(std::string(kPresenceMarker) + "clarity\n"));
  CHECK_FALSE(extract_query("no query here"));
}

TEST_CASE("modes parse by name") {
  for (auto m : kPromptingModes) CHECK(parse_prompting_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_prompting_mode("chain_of_thought"), ArgumentError);
}

TEST_CASE("demonstration pool selection") {
  const auto c = simulated_corpus(200, 11);
  const auto train = records_in_split(c, Split::train);
  const DemonstrationPool pool(train);
  REQUIRE(pool.fixed().size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(pool.fixed()[k].labels.size() == k + 1);
  CHECK(pool.diverse().size() == 5);
  const auto& q = train[17].text;
  const auto top = pool.retrieve(q);
  REQUIRE(top.size() == 3);
  CHECK(top.front().id == train[17].id);
  CHECK(select_demonstrations(PromptingMode::two_pass, pool, q).empty());
  CHECK(select_demonstrations(PromptingMode::few_shot_diverse, pool, q).size() == 5);

  DemonstrationConfig bad;
  bad.fixed_ids = {"nope", "nada", "zilch"};
  CHECK_THROWS(DemonstrationPool(train, bad));
  CHECK_THROWS_AS(DemonstrationPool(records_in_split(c, Split::test)), ContractError);
}

TEST_CASE("decomposed modes issue the expected number of calls") {
  const auto c = simulated_corpus(100, 12);
  const auto test = records_in_split(c, Split::test);
  const DemonstrationPool pool(records_in_split(c, Split::train));
  OracleInferenceProvider two(c.records);
  const auto r = run_prompting_eval(two, PromptingMode::two_pass, test, pool, inv());
  CHECK(r.stats.n_requests == 2 * test.size());
  CHECK(r.report.detection.aggregates.micro_f1 == 1.0);
  CHECK(*r.report.sentiment.mse == 0.0);

  OracleInferenceProvider zero(c.records);
  const auto z = run_prompting_eval(zero, PromptingMode::zero_shot, test, pool, inv());
  CHECK(zero.calls() == test.size());
  CHECK(z.predictions.size() == test.size());
  CHECK(to_json(z.stats).contains("n_valid"));
}

TEST_CASE("provider failures score as empty predictions") {
  const auto c = simulated_corpus(100, 13);
  const auto test = records_in_split(c, Split::test);
  const DemonstrationPool pool(records_in_split(c, Split::train));
  FunctionProvider dead([](const CompletionRequest&) -> CompletionResponse { throw TransportError("down"); });
  DispatchOptions d;
  d.max_retries = 0;
  d.initial_backoff = std::chrono::milliseconds(0);
  const auto r = run_prompting_eval(dead, PromptingMode::zero_shot, test, pool, inv(), d);
  CHECK(r.stats.n_failed == test.size());
  CHECK(r.report.detection.aggregates.micro_f1 == 0.0);
}
