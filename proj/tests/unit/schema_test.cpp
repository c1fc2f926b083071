#include <doctest.h>

#include <set>

#include "synthabsa/errors.hpp"
#include "synthabsa/random.hpp"
#include "synthabsa/schema.hpp"

using namespace synthabsa;

TEST_CASE("sentiment values round-trip") {
  for (auto s : kAllSentiments) {
    CHECK(sentiment_from_value(sentiment_value(s)) == s);
    CHECK(parse_sentiment(to_string(s)) == s);
  }
  CHECK_THROWS_AS(sentiment_from_value(2), ArgumentError);
  CHECK_FALSE(parse_sentiment("Positive"));
  CHECK_FALSE(parse_sentiment("mixed"));
}

TEST_CASE("bundled inventory has 20 aspects in five groups") {
  const auto& inv = default_aspect_inventory();
  CHECK(inv.size() == 20);
  std::set<std::string> groups;
  for (const auto& a : inv.aspects()) groups.insert(a.group);
  CHECK(groups.size() == 5);
  CHECK(inv.contains("workload"));
  CHECK_FALSE(inv.contains("parking"));
  CHECK_THROWS_AS(inv.group_of("parking"), SchemaError);
}

TEST_CASE("inventory construction validates") {
  auto aspects = default_aspect_inventory().aspects();
  auto dup = aspects;
  dup.back().id = dup.front().id;
  CHECK_THROWS_AS(AspectInventory{dup}, SchemaError);
  auto short_list = aspects;
  short_list.pop_back();
  CHECK_THROWS_AS(AspectInventory{short_list}, SchemaError);
  auto bad_group = aspects;
  bad_group.front().group = "vibes";
  CHECK_THROWS_AS(AspectInventory{bad_group}, SchemaError);
}

TEST_CASE("label sets stay sorted and reject bad sizes") {
  LabelSet l;
  l.set("workload", Sentiment::negative);
  l.set("clarity", Sentiment::positive);
  CHECK(l.entries().front().aspect == "clarity");
  CHECK_FALSE(l.insert("clarity", Sentiment::neutral));
  CHECK(l.find("clarity") == Sentiment::positive);
  const auto& inv = default_aspect_inventory();
  CHECK(validate_label_set(l, inv).ok());
  CHECK_FALSE(validate_label_set(LabelSet{}, inv).ok());
  LabelSet four = l;
  four.set("materials", Sentiment::neutral);
  four.set("organization", Sentiment::neutral);
  CHECK_FALSE(validate_label_set(four, inv).ok());
  LabelSet unknown{{"parking", Sentiment::neutral}};
  CHECK_FALSE(validate_label_set(unknown, inv).ok());
}

TEST_CASE("label set JSON is strict") {
  const LabelSet l{{"clarity", Sentiment::positive}, {"workload", Sentiment::negative}};
  CHECK(label_set_from_json(label_set_to_json(l)) == l);
  CHECK_THROWS_AS(label_set_from_json(nlohmann::json{{"clarity", "good"}}), SchemaError);
  CHECK_THROWS_AS(label_set_from_json(nlohmann::json{{"clarity", 1}}), SchemaError);
  CHECK_THROWS_AS(label_set_from_json(nlohmann::json::array()), SchemaError);
}

TEST_CASE("nuance schema groups and forced attributes") {
  const auto& schema = default_nuance_schema();
  CHECK(schema.find(kCourseNameAttribute));
  CHECK(schema.find(kLengthBandAttribute));
  std::size_t total = 0;
  for (auto g : kNuanceGroups) {
    CHECK(schema.attributes_in(g).size() >= selections_per_group(g));
    total += selections_per_group(g);
  }
  CHECK(total == 15);
  for (const auto& a : schema.attributes()) {
    CHECK(a.values.size() >= NuanceSchema::kMinValues);
    CHECK(a.values.size() <= NuanceSchema::kMaxValues);
  }
}

TEST_CASE("length bands classify with shared boundaries going short") {
  const auto& bands = default_length_bands();
  CHECK(bands.classify(35) == "very_short");
  CHECK(bands.classify(70) == "very_short");
  CHECK(bands.classify(71) == "short");
  CHECK(bands.classify(280) == "long");
  CHECK_FALSE(bands.classify(20));
  CHECK_FALSE(bands.classify(281));
  CHECK(bands.at("medium").midpoint() == 140.0);
  CHECK_THROWS_AS(bands.at("epic"), ArgumentError);
}

TEST_CASE("records keep word counts in sync") {
  ReviewRecord r;
  r.id = "x";
  r.set_text("  three little   words ");
  CHECK(r.meta.word_count == 3);
  r.labels = {{"clarity", Sentiment::neutral}};
  CHECK(validate_record(r, default_aspect_inventory()).ok());
  r.meta.word_count = 9;
  CHECK_FALSE(validate_record(r, default_aspect_inventory()).ok());
}

TEST_CASE("real_transfer records may carry more than three labels") {
  ReviewRecord r;
  r.id = "ext";
  r.set_text("text");
  r.labels = {{"clarity", Sentiment::neutral}, {"workload", Sentiment::neutral},
              {"materials", Sentiment::neutral}, {"organization", Sentiment::neutral}};
  CHECK_FALSE(validate_record(r, default_aspect_inventory()).ok());
  r.source = RecordSource::real_transfer;
  CHECK(validate_record(r, default_aspect_inventory()).ok());
}

TEST_CASE("rng is reproducible and derived streams differ") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(derive_seed(42, "targets") != derive_seed(42, "nuance"));
  CHECK(derive_seed(42, "targets") == derive_seed(42, "targets"));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("uniform draws stay in range") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    CHECK(rng.uniform_below(7) < 7);
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("sample_indices draws distinct indices") {
  Rng rng(3);
  const auto idx = rng.sample_indices(50, 20);
  CHECK(idx.size() == 20);
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 20);
  for (auto i : idx) CHECK(i < 50);
}

TEST_CASE("categorical follows its weights") {
  Rng rng(9);
  const std::vector<double> w = {0.2, 0.0, 0.8};
  std::array<int, 3> hits{};
  for (int i = 0; i < 20000; ++i) ++hits[rng.categorical(w)];
  CHECK(hits[1] == 0);
  CHECK(hits[2] / 20000.0 == doctest::Approx(0.8).epsilon(0.02));
}
