#include <doctest.h>

#include <atomic>
#include <set>

#include "support.hpp"
#include "synthabsa/errors.hpp"
#include "synthabsa/generation.hpp"

using namespace synthabsa;
using namespace synthabsa::testing;

namespace {

DispatchOptions fast() {
  DispatchOptions d;
  d.initial_backoff = std::chrono::milliseconds(0);
  return d;
}

}  // namespace

TEST_CASE("aspect-count policies") {
  const auto r = aspect_count_probabilities(AspectCountPolicy::rounded);
  CHECK(r[0] == 0.30);
  CHECK(r[1] == 0.40);
  const auto e = aspect_count_probabilities(AspectCountPolicy::empirical);
  CHECK(e[0] + e[1] + e[2] == doctest::Approx(1.0));
  CHECK(e[1] == doctest::Approx(1969.0 / 5984.0));
}

TEST_CASE("label sets are distinct and of size k") {
  Rng rng(1);
  const auto& inv = default_aspect_inventory();
  for (int k = 1; k <= 3; ++k)
    for (int i = 0; i < 200; ++i) {
      const auto l = sample_label_set(rng, k, inv);
      CHECK(l.size() == std::size_t(k));
      CHECK(validate_label_set(l, inv).ok());
    }
  CHECK_THROWS_AS(sample_label_set(rng, 0, inv), ArgumentError);
  CHECK_THROWS_AS(sample_label_set(rng, 4, inv), ArgumentError);
}

TEST_CASE("every sampled aspect and sentiment appears") {
  Rng rng(2);
  std::set<std::string> aspects;
  std::set<Sentiment> sentiments;
  for (int i = 0; i < 2000; ++i)
    for (const auto& e : sample_label_set(rng, 2, default_aspect_inventory())) {
      aspects.insert(e.aspect);
      sentiments.insert(e.sentiment);
    }
  CHECK(aspects.size() == 20);
  CHECK(sentiments.size() == 3);
}

TEST_CASE("nuance states validate against the schema") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto s = sample_nuance_state(rng, default_nuance_schema());
    CHECK(validate_nuance_state(s, &default_nuance_schema()).ok());
    CHECK(nuance_state_from_json(nuance_state_to_json(s), default_nuance_schema()) == s);
  }
}

TEST_CASE("token budget formula") {
  CHECK(output_token_budget("medium", 1) == 288);
  CHECK(output_token_budget("medium", 3) == 352);
  CHECK(output_token_budget("very_short", 1) == 128);
  CHECK(output_token_budget("long", 2) % kBudgetGranularity == 0);
  CHECK_THROWS_AS(output_token_budget("epic", 1), ArgumentError);
  CHECK_THROWS_AS(output_token_budget("short", 4), ArgumentError);
}

TEST_CASE("generation prompt carries targets, attributes and length guidance") {
  Rng rng(4);
  const auto labels = sample_label_set(rng, 2, default_aspect_inventory());
  const auto nuance = sample_nuance_state(rng, default_nuance_schema());
  const auto p = build_generation_prompt(labels, nuance, "Be plain.");
  CHECK(p.starts_with(kGenerationPreamble));
  CHECK(p.find(std::string(kAspectBlockLabel) + render_aspect_block(labels)) != std::string::npos);
  CHECK(p.find(std::string(kAttributeBlockLabel) + render_attribute_block(nuance)) != std::string::npos);
  CHECK(p.find(kLengthGuidanceLabel) != std::string::npos);
  CHECK(p.find(std::string(kStableInstructionLabel) + "Be plain.") != std::string::npos);
  CHECK(p == build_generation_prompt(labels, nuance, "Be plain."));
  NuanceState no_band;
  CHECK_THROWS_AS(build_generation_prompt(labels, no_band, "x"), ContractError);
}

TEST_CASE("plans are deterministic and the two streams are independent") {
  GenerationConfig g;
  g.n = 40;
  g.master_seed = 42;
  const auto a = plan_generation(g, default_aspect_inventory(), default_nuance_schema());
  const auto b = plan_generation(g, default_aspect_inventory(), default_nuance_schema());
  REQUIRE(a.size() == 40);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].prompt_text == b[i].prompt_text);
    CHECK(a[i].max_output_tokens ==
          output_token_budget(*a[i].nuance.find(kLengthBandAttribute), int(a[i].labels.size())));
  }
  // Targets follow only the target stream.
  Rng targets = derive_stream(42, kTargetStream);
  for (const auto& r : a) {
    const int k = sample_aspect_count(targets);
    CHECK(r.labels == sample_label_set(targets, k, default_aspect_inventory()));
  }
}

TEST_CASE("batch dispatch keeps request order and retries transport errors") {
  std::atomic<int> calls = 0;
  FunctionProvider flaky([&](const CompletionRequest& r) {
    if (calls++ % 3 == 0) throw TransportError("blip");
    return CompletionResponse{r.id, "ok " + r.id, CompletionStatus::completed};
  });
  std::vector<CompletionRequest> reqs;
  for (int i = 0; i < 30; ++i) reqs.push_back({"r" + std::to_string(i), "p", 0});
  const auto out = dispatch_batch(flaky, reqs, fast());
  REQUIRE(out.size() == 30);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].id == reqs[i].id);
    REQUIRE(out[i].ok());
    CHECK(out[i].response->text == "ok " + reqs[i].id);
  }
  reqs.push_back(reqs.front());
  CHECK_THROWS_AS(dispatch_batch(flaky, reqs, fast()), ArgumentError);
}

TEST_CASE("exhausted retries are reported, not thrown") {
  FunctionProvider dead([](const CompletionRequest&) -> CompletionResponse { throw TransportError("down"); });
  auto d = fast();
  d.max_retries = 2;
  const std::vector<CompletionRequest> reqs = {{"a", "p", 0}};
  const auto out = dispatch_batch(dead, reqs, d);
  CHECK_FALSE(out[0].ok());
  CHECK(out[0].attempts == 3);
  CHECK_FALSE(out[0].error.empty());
}

TEST_CASE("generated records keep their targets and flag incomplete outputs") {
  SimulatedOptions o;
  o.incomplete_every = 4;
  SimulatedProvider sim(o);
  GenerationConfig g;
  g.n = 20;
  g.master_seed = 5;
  g.dispatch = fast();
  const auto plan = plan_generation(g, default_aspect_inventory(), default_nuance_schema());
  const auto run = generate_records(sim, g, default_aspect_inventory(), default_nuance_schema());
  CHECK(run.requested == 20);
  REQUIRE(run.records.size() == 20);
  std::size_t incomplete = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    CHECK(run.records[i].labels == plan[i].labels);
    CHECK(run.records[i].nuance == plan[i].nuance);
    CHECK(run.records[i].meta.prompt_state_id == "messier_realism");
    incomplete += run.records[i].meta.completion_status == CompletionStatus::incomplete;
  }
  CHECK(incomplete == 5);
}

TEST_CASE("refinement keeps the draft when the editor fails") {
  FunctionProvider broken([](const CompletionRequest& r) {
    return CompletionResponse{r.id, "cut off", CompletionStatus::incomplete};
  });
  Rng rng(6);
  const std::vector<std::string> drafts = {"draft one"};
  const std::vector<LabelSet> labels = {sample_label_set(rng, 1, default_aspect_inventory())};
  const std::vector<NuanceState> nuance = {sample_nuance_state(rng, default_nuance_schema())};
  const auto out = refine_batch(broken, drafts, labels, nuance, "x", fast());
  CHECK(out[0].text == "draft one");
  CHECK(out[0].status == RefinementStatus::skipped);

  FunctionProvider editor([](const CompletionRequest& r) {
    return CompletionResponse{r.id, "  better draft  ", CompletionStatus::completed};
  });
  const auto ok = refine_batch(editor, drafts, labels, nuance, "x", fast());
  CHECK(ok[0].status == RefinementStatus::applied);
  const auto prompt = build_refinement_prompt("draft one", labels[0], nuance[0], "x");
  CHECK(prompt.find(std::string(kDraftOpen) + "draft one" + std::string(kDraftClose)) != std::string::npos);
}

TEST_CASE("pilot gate counts missing records as failures") {
  std::vector<ReviewRecord> none;
  const auto r = evaluate_pilot(none, 25);
  CHECK_FALSE(r.passed);
  CHECK(r.completed_rate == 0.0);
  CHECK(to_json(r).contains("passed"));
}
