#include <doctest.h>

#include "support.hpp"
#include "synthabsa/errors.hpp"
#include "synthabsa/transfer.hpp"

using namespace synthabsa;
using namespace synthabsa::testing;

namespace {
const AspectInventory& inv() { return default_aspect_inventory(); }
}

TEST_CASE("mapping loader rejects ambiguous documents") {
  CHECK_THROWS_AS(load_aspect_mapping(R"({"map": {"A": "clarity", "A": "workload"}})", inv()), SchemaError);
  CHECK_THROWS_AS(load_aspect_mapping(R"({"map": {"A": "parking"}})", inv()), SchemaError);
  CHECK_THROWS_AS(load_aspect_mapping(R"({"map": {"A": ["clarity", "workload"]}})", inv()), SchemaError);
  CHECK_THROWS_AS(load_aspect_mapping(R"({"map": {"A": "clarity"}, "unmapped": ["A"]})", inv()), SchemaError);
  CHECK_THROWS_AS(load_aspect_mapping(R"({"map": {"A": "clarity"}, "polarity": {"good": "great"}})", inv()),
                  SchemaError);
  const auto m = load_aspect_mapping(R"({"map": {"A": "workload", "B": "clarity"}})", inv());
  const auto overlap = m.overlap_aspects(inv());
  CHECK(overlap.size() == 2);
  CHECK(inv().index_of(overlap[0]) < inv().index_of(overlap[1]));
}

TEST_CASE("default polarity table") {
  const auto t = default_polarity_table();
  CHECK(t.at("pos") == Sentiment::positive);
  CHECK(t.at("-1") == Sentiment::negative);
  CHECK(t.at("neutral") == Sentiment::neutral);
}

TEST_CASE("multi-mention policies") {
  const auto m = load_aspect_mapping(R"({"map": {"W": "workload", "C": "clarity"}})", inv());
  const std::vector<ExternalRecord> ext = {
      {"x", "t", {{"W", "pos"}, {"W", "neg"}}},
      {"y", "t", {{"W", "neg"}, {"W", "pos"}, {"W", "neg"}}},
      {"z", "t", {{"C", "neu"}, {"ROOM", "neg"}}},
  };
  const auto maj = map_external_corpus(ext, m, inv());
  CHECK(maj.records[0].labels.find("workload") == Sentiment::neutral);
  CHECK(maj.records[1].labels.find("workload") == Sentiment::negative);
  CHECK(maj.unlisted_labels.at("ROOM") == 1);
  for (const auto& r : maj.records) CHECK(r.source == RecordSource::real_transfer);
  const auto first = map_external_corpus(ext, m, inv(), MultiMentionPolicy::first);
  CHECK(first.records[0].labels.find("workload") == Sentiment::positive);
  const std::vector<ExternalRecord> odd = {{"q", "t", {{"W", "sort of"}}}};
  CHECK_THROWS_WITH_AS(map_external_corpus(odd, m, inv()), doctest::Contains("sort of"), SchemaError);
}

TEST_CASE("fixture corpus loads and maps") {
  const auto ext = load_external_corpus(fixture_dir() / "external_corpus.jsonl");
  CHECK(ext.size() == 60);
  const auto m = load_aspect_mapping_file(fixture_dir() / "overlap_mapping.json", inv());
  const auto b = map_external_corpus(ext, m, inv());
  CHECK(b.input_count == 60);
  CHECK(b.records.size() + b.dropped_count == 60);
  CHECK(b.support.size() == 9);
  CHECK(b.unlisted_labels.empty());
  const auto table = support_table_json(b);
  CHECK(table["support"].size() == 9);
}

TEST_CASE("restriction then overlap scoring") {
  const auto m = load_aspect_mapping(R"({"map": {"W": "workload", "C": "clarity"}})", inv());
  const std::vector<ExternalRecord> ext = {{"x", "t", {{"W", "pos"}}}, {"y", "t", {{"C", "neg"}}}};
  const auto b = map_external_corpus(ext, m, inv());
  Predictions p;
  p.aspects = {{"workload", "materials"}, {"clarity"}};
  p.sentiments = {{{"workload", 1.0}, {"materials", 0.0}}, {{"clarity", -1.0}}};
  CHECK_THROWS_AS(evaluate_overlap("x", p, b), ContractError);
  const auto restricted = restrict_to_overlap(p, b.overlap_aspects);
  const auto r = evaluate_overlap("x", restricted, b);
  CHECK(r.detection.aggregates.micro_f1 == 1.0);
  CHECK(*r.sentiment.mse == 0.0);
  CHECK(r.aspects == b.overlap_aspects);
}

TEST_CASE("overlap-matched comparison cuts synthetic gold to the overlap") {
  const auto m = load_aspect_mapping(R"({"map": {"W": "workload"}})", inv());
  const std::vector<ExternalRecord> ext = {{"x", "t", {{"W", "pos"}}}};
  const auto b = map_external_corpus(ext, m, inv());
  const std::vector<ReviewRecord> syn = {
      make_record("s1", "t", {{"workload", Sentiment::positive}, {"clarity", Sentiment::negative}}),
      make_record("s2", "t", {{"clarity", Sentiment::negative}})};
  Predictions sp;
  sp.aspects = {{"workload"}, {}};
  sp.sentiments = {{{"workload", 1.0}}, {}};
  Predictions rp;
  rp.aspects = {{}};
  rp.sentiments = {{}};
  const auto c = overlap_matched_comparison("x", sp, syn, rp, b);
  CHECK(c.synthetic.detection.aggregates.micro_f1 == 1.0);
  CHECK(c.synthetic.counts.n_reviews == 2);
  CHECK(c.real.detection.aggregates.micro_f1 == 0.0);
  CHECK(c.delta_micro_f1 == -1.0);
  CHECK(to_json(c)["row"]["Mapped real micro-F1"] == 0.0);
}
