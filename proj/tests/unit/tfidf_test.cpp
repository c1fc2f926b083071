#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "synthabsa/errors.hpp"
#include "synthabsa/tfidf.hpp"

using namespace synthabsa;
using namespace synthabsa::testing;

TEST_CASE("tokenizer splits on non-alphanumerics") {
  const auto t = tokenize("It's GREAT, 10/10!");
  CHECK(t == std::vector<std::string>{"it", "s", "great", "10", "10"});
  CHECK(tokenize("AbC", false) == std::vector<std::string>{"AbC"});
}

TEST_CASE("vectorizer idf and normalization") {
  const std::vector<std::string> docs = {"good course", "good lecturer", "bad course"};
  VectorizerConfig cfg;
  cfg.min_df = 1;
  const auto v = fit_vectorizer(docs, cfg);
  const auto col = v.index_of("good");
  REQUIRE(col >= 0);
  CHECK(v.document_frequency()[col] == 2);
  CHECK(v.idf(col) == doctest::Approx(std::log(4.0 / 3.0) + 1.0));
  CHECK(v.index_of("good course") >= 0);
  CHECK(v.index_of("missing") == -1);
  const auto x = v.transform("good good course unknownword");
  double norm = 0;
  for (const auto& [c, val] : x) norm += val * val;
  CHECK(norm == doctest::Approx(1.0));
  CHECK(std::is_sorted(x.begin(), x.end()));
}

TEST_CASE("min_df prunes and an empty vocabulary is a schema error") {
  const std::vector<std::string> docs = {"alpha", "beta"};
  CHECK_THROWS_AS(fit_vectorizer(docs), SchemaError);
  CHECK_THROWS_AS(fit_vectorizer(std::vector<std::string>{}), ArgumentError);
}

TEST_CASE("two-step training is deterministic and serializes") {
  const auto c = simulated_corpus(300, 8);
  const auto tr = records_in_split(c, Split::train), va = records_in_split(c, Split::validation);
  TwoStepConfig cfg;
  cfg.detector_iterations = 60;
  const auto a = train_two_step(tr, va, default_aspect_inventory(), 1, cfg);
  const auto b = train_two_step(tr, va, default_aspect_inventory(), 1, cfg);
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(a.aspects.size() == 20);
  CHECK(a.aspect_ids() == default_aspect_inventory().ids());
  const auto back = two_step_model_from_json(nlohmann::json::parse(to_json(a).dump()));
  const auto test = records_in_split(c, Split::test);
  const auto& text = test.front().text;
  CHECK(score_text(back, "q", text) == score_text(a, "q", text));

  const auto dir = scratch_dir("tfidf-model");
  save_model(a, dir / "m.json");
  CHECK(to_json(load_model(dir / "m.json")).dump() == to_json(a).dump());
}

TEST_CASE("scores stay in range and predictions match thresholds") {
  const auto c = simulated_corpus(300, 9);
  const auto model = train_two_step(records_in_split(c, Split::train), records_in_split(c, Split::validation),
                                    default_aspect_inventory(), 2);
  for (const auto& r : records_in_split(c, Split::test)) {
    const auto s = score_text(model, r.id, r.text);
    CHECK(s.id == r.id);
    for (const auto& [a, p] : s.probabilities) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    const auto pred = predict_two_step(model, r.text);
    for (const auto& a : pred.aspects) CHECK(s.probabilities.at(a) >= model.thresholds.at(a));
    for (const auto& [a, v] : pred.sentiments) {
      CHECK(pred.aspects.contains(a));
      CHECK(std::abs(v) <= 1.0);
    }
  }
}

TEST_CASE("training refuses leakage") {
  const auto c = simulated_corpus(100, 10);
  auto tr = records_in_split(c, Split::train);
  auto va = records_in_split(c, Split::validation);
  va.push_back(tr.front());
  CHECK_THROWS_AS(train_two_step(tr, va, default_aspect_inventory(), 1), ContractError);
}

TEST_CASE("aspects without training positives are degenerate") {
  std::vector<ReviewRecord> tr, va;
  for (int i = 0; i < 20; ++i) {
    tr.push_back(make_record("t" + std::to_string(i), "workload heavy every week " + std::to_string(i % 3),
                             {{"workload", i % 2 ? Sentiment::negative : Sentiment::positive}}));
    va.push_back(make_record("v" + std::to_string(i), "workload heavy every week", {{"workload", Sentiment::negative}}));
  }
  const auto m = train_two_step(tr, va, default_aspect_inventory(), 1);
  std::size_t degenerate = 0;
  for (const auto& a : m.aspects) degenerate += a.degenerate;
  CHECK(degenerate == 19);
  CHECK(predict_two_step(m, "anything at all").aspects.size() <= 1);
}
