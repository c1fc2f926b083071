#include <doctest.h>

#include <fstream>

#include "support.hpp"
#include "synthabsa/corpus.hpp"
#include "synthabsa/errors.hpp"

using namespace synthabsa;
using namespace synthabsa::testing;

namespace {

std::vector<ReviewRecord> three() {
  return {make_record("a", "same text", {{"clarity", Sentiment::positive}}),
          make_record("b", "other text", {{"workload", Sentiment::negative}}),
          make_record("c", "  same text\n", {{"materials", Sentiment::neutral}})};
}

}  // namespace

TEST_CASE("assembly flags later exact duplicates without removing them") {
  const auto a = assemble_corpus(three());
  CHECK(a.corpus.records.size() == 3);
  REQUIRE(a.dedup.duplicate_count() == 1);
  CHECK(a.dedup.pairs[0].original_id == "a");
  CHECK(a.dedup.pairs[0].duplicate_id == "c");
  CHECK(a.corpus.records[2].meta.duplicate_of == "a");
  CHECK_FALSE(a.corpus.records[0].meta.duplicate_of);
  CHECK(drop_flagged_duplicates(a.corpus).records.size() == 2);
}

TEST_CASE("assembly rejects repeated ids and invalid records") {
  auto recs = three();
  recs[1].id = "a";
  CHECK_THROWS_WITH_AS(assemble_corpus(recs), doctest::Contains("'a'"), SchemaError);
  auto bad = three();
  bad[0].labels = {};
  CHECK_THROWS(assemble_corpus(bad));
}

TEST_CASE("split floors and remainder") {
  Corpus c;
  for (int i = 0; i < 17; ++i) c.records.push_back(make_record("r" + std::to_string(i), "t", {{"clarity", Sentiment::neutral}}));
  const auto s = split_corpus(c, 42);
  CHECK(s.train == 13);
  CHECK(s.validation == 1);
  CHECK(s.test == 3);
  CHECK(split_corpus(c, 43) != s);
  Corpus tiny;
  tiny.records = {c.records[0], c.records[1]};
  CHECK_THROWS_AS(split_corpus(tiny, 42), ArgumentError);
  CHECK_THROWS_AS(split_corpus(c, 42, {0.5, 0.1, 0.1}), ArgumentError);
}

TEST_CASE("apply_split tags records and split ids track membership") {
  Corpus c;
  for (int i = 0; i < 30; ++i) c.records.push_back(make_record("r" + std::to_string(i), "t", {{"clarity", Sentiment::neutral}}));
  apply_split(c, split_corpus(c, 42));
  const auto test = records_in_split(c, Split::test);
  CHECK(test.size() == 3);
  const auto id = split_id(test, Split::test);
  CHECK(id.starts_with("test-3-"));
  auto other = c;
  apply_split(other, split_corpus(other, 7));
  CHECK(split_id(records_in_split(other, Split::test), Split::test) != id);
}

TEST_CASE("JSONL round-trip preserves unknown keys") {
  auto c = simulated_corpus(30, 2);
  c.records[0].extra["annotator_note"] = "kept";
  c.records[0].meta.extra["batch"] = 7;
  c.provenance = {"gen-1", "messier_realism", 2};
  const auto dir = scratch_dir("corpus-roundtrip");
  save_corpus(c, dir / "c.jsonl");
  CHECK(std::filesystem::exists(provenance_path(dir / "c.jsonl")));
  const auto back = load_corpus(dir / "c.jsonl");
  CHECK(back == c);
}

TEST_CASE("loader reports the failing line") {
  const auto dir = scratch_dir("corpus-bad");
  auto c = simulated_corpus(10, 3);
  save_corpus(c, dir / "c.jsonl");
  {
    std::ofstream f(dir / "c.jsonl", std::ios::app);
    f << "{not json\n";
  }
  try {
    load_corpus(dir / "c.jsonl");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 11);
  }
  std::ofstream f(dir / "d.jsonl");
  f << R"({"id":"x","text":"hello","labels":{"parking":"positive"}})" << "\n";
  f.close();
  CHECK_THROWS_AS(load_corpus(dir / "d.jsonl"), SchemaError);
}

TEST_CASE("profile and adherence") {
  const auto c = simulated_corpus(200, 4);
  const auto p = corpus_profile(c);
  CHECK(p.n_records == 200);
  CHECK(p.course_name_count > 1);
  std::size_t hist = 0;
  for (const auto& [k, n] : p.aspect_count_histogram) hist += n;
  CHECK(hist == 200);
  CHECK(length_band_adherence(c) >= 0.8);
  CHECK_THROWS_AS(corpus_profile(Corpus{}), ArgumentError);
  CHECK(to_json(p).contains("mean_words"));
}

TEST_CASE("polarity support tallies") {
  const std::vector<ReviewRecord> recs = {
      make_record("a", "t", {{"clarity", Sentiment::positive}, {"workload", Sentiment::negative}}),
      make_record("b", "t", {{"clarity", Sentiment::neutral}})};
  const auto s = polarity_support(recs);
  CHECK(s.at("clarity") == PolaritySupport{2, 1, 1, 0});
  CHECK(s.at("workload") == PolaritySupport{1, 0, 0, 1});
}
