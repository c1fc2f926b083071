#include "synthabsa/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "synthabsa/errors.hpp"
#include "synthabsa/random.hpp"

namespace synthabsa {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

AssembledCorpus assemble_corpus(std::vector<ReviewRecord> records, const AspectInventory& inventory,
                                CorpusProvenance provenance) {
  AssembledCorpus out;
  std::set<std::string, std::less<>> ids;
  std::map<std::string, std::string, std::less<>> first_by_text;
  for (auto& rec : records) {
    if (!ids.insert(rec.id).second) throw SchemaError("duplicate record id '" + rec.id + "'");
    const auto check = validate_record(rec, inventory);
    if (!check.ok())
      throw SchemaError("record '" + rec.id + "' is invalid: " + check.violations.front());
    rec.meta.duplicate_of.reset();
    const auto body = std::string(trim(rec.text));
    if (body.empty()) continue;
    auto [it, inserted] = first_by_text.emplace(body, rec.id);
    if (!inserted) {
      rec.meta.duplicate_of = it->second;
      out.dedup.pairs.push_back({it->second, rec.id});
    }
  }
  out.corpus.records = std::move(records);
  out.corpus.provenance = std::move(provenance);
  return out;
}

Corpus drop_flagged_duplicates(const Corpus& corpus) {
  Corpus out;
  out.provenance = corpus.provenance;
  for (const auto& r : corpus.records)
    if (!r.meta.duplicate_of) out.records.push_back(r);
  return out;
}

std::map<std::string, PolaritySupport> polarity_support(std::span<const ReviewRecord> records) {
  std::map<std::string, PolaritySupport> table;
  for (const auto& r : records) {
    for (const auto& e : r.labels) {
      auto& row = table[e.aspect];
      ++row.reviews;
      switch (e.sentiment) {
        case Sentiment::positive: ++row.positive; break;
        case Sentiment::neutral: ++row.neutral; break;
        case Sentiment::negative: ++row.negative; break;
      }
    }
  }
  return table;
}

CorpusProfile corpus_profile(const Corpus& corpus) {
  if (corpus.records.empty()) throw ArgumentError("cannot profile an empty corpus");
  CorpusProfile p;
  p.n_records = corpus.records.size();
  std::vector<int> words;
  words.reserve(p.n_records);
  std::set<std::string, std::less<>> courses, styles, grades;
  std::size_t aspects = 0;
  for (const auto& r : corpus.records) {
    words.push_back(r.meta.word_count);
    aspects += r.labels.size();
    ++p.aspect_count_histogram[r.labels.size()];
    if (r.meta.completion_status == CompletionStatus::incomplete) ++p.incomplete_count;
    if (r.meta.length_band) ++p.length_band_histogram[*r.meta.length_band];
    if (r.nuance) {
      if (auto v = r.nuance->find("course_name")) courses.emplace(*v);
      if (auto v = r.nuance->find("writing_style")) styles.emplace(*v);
      if (auto v = r.nuance->find("grade_band")) grades.emplace(*v);
    }
  }
  std::sort(words.begin(), words.end());
  const auto n = words.size();
  p.min_words = words.front();
  p.max_words = words.back();
  p.median_words = n % 2 ? words[n / 2] : 0.5 * (words[n / 2 - 1] + words[n / 2]);
  double total = 0.0;
  for (int w : words) total += w;
  p.mean_words = total / static_cast<double>(n);
  p.mean_aspects_per_review = static_cast<double>(aspects) / static_cast<double>(n);
  p.course_name_count = courses.size();
  p.style_count = styles.size();
  p.grade_band_count = grades.size();
  p.polarity = polarity_support(corpus.records);
  return p;
}

json to_json(const CorpusProfile& p) {
  json hist = json::object();
  for (const auto& [k, v] : p.aspect_count_histogram) hist[std::to_string(k)] = v;
  json polarity = json::object();
  for (const auto& [aspect, s] : p.polarity)
    polarity[aspect] = {{"reviews", s.reviews},
                        {"positive", s.positive},
                        {"neutral", s.neutral},
                        {"negative", s.negative}};
  return {{"n_records", p.n_records},
          {"mean_words", p.mean_words},
          {"median_words", p.median_words},
          {"min_words", p.min_words},
          {"max_words", p.max_words},
          {"mean_aspects_per_review", p.mean_aspects_per_review},
          {"aspect_count_histogram", hist},
          {"course_name_count", p.course_name_count},
          {"style_count", p.style_count},
          {"grade_band_count", p.grade_band_count},
          {"incomplete_count", p.incomplete_count},
          {"length_band_histogram", p.length_band_histogram},
          {"polarity_support", polarity}};
}

double length_band_adherence(const Corpus& corpus, const LengthBandTable& bands) {
  if (corpus.records.empty()) throw ArgumentError("cannot measure adherence of an empty corpus");
  std::size_t inside = 0;
  for (const auto& r : corpus.records) {
    if (!r.meta.length_band) throw ArgumentError("record '" + r.id + "' has no length band");
    if (bands.at(*r.meta.length_band).contains(r.meta.word_count)) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(corpus.records.size());
}

// ---------------------------------------------------------------------------
// Splitting

std::optional<Split> SplitAssignment::find(std::string_view id) const {
  for (const auto& [rid, split] : assignments)
    if (rid == id) return split;
  return std::nullopt;
}

SplitAssignment split_corpus(const Corpus& corpus, std::uint64_t seed,
                             const SplitFractions& fractions) {
  const std::size_t n = corpus.records.size();
  if (n < 3) throw ArgumentError("split needs at least 3 records, got " + std::to_string(n));
  const double sum = fractions.train + fractions.validation + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9 || fractions.train < 0 || fractions.validation < 0 ||
      fractions.test < 0)
    throw ArgumentError("split fractions must be non-negative and sum to 1");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  // The epsilon keeps e.g. 0.8 * 10 from flooring to 7 on representation error.
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions.validation * n + 1e-9));

  std::vector<Split> by_index(n, Split::test);
  for (std::size_t pos = 0; pos < n; ++pos) {
    if (pos < n_train) by_index[order[pos]] = Split::train;
    else if (pos < n_train + n_val) by_index[order[pos]] = Split::validation;
  }
  SplitAssignment out;
  out.seed = seed;
  out.assignments.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.assignments.emplace_back(corpus.records[i].id, by_index[i]);
    switch (by_index[i]) {
      case Split::train: ++out.train; break;
      case Split::validation: ++out.validation; break;
      case Split::test: ++out.test; break;
    }
  }
  return out;
}

void apply_split(Corpus& corpus, const SplitAssignment& assignment) {
  if (assignment.assignments.size() != corpus.records.size())
    throw ArgumentError("split assignment does not cover the corpus");
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& [id, split] = assignment.assignments[i];
    if (id != corpus.records[i].id) throw ArgumentError("split assignment order does not match corpus");
    corpus.records[i].split = split;
  }
}

std::vector<ReviewRecord> records_in_split(const Corpus& corpus, Split split) {
  std::vector<ReviewRecord> out;
  for (const auto& r : corpus.records)
    if (r.split == split) out.push_back(r);
  return out;
}

std::string split_id(std::span<const ReviewRecord> records, Split split) {
  std::uint64_t h = fnv1a64(to_string(split));
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.split && *r.split != split) continue;
    h ^= fnv1a64(r.id) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    ++n;
  }
  return fmt::format("{}-{}-{:016x}", to_string(split), n, h);
}

// ---------------------------------------------------------------------------
// Persistence

ordered_json record_to_json(const ReviewRecord& r) {
  ordered_json j = ordered_json::object();
  j["id"] = r.id;
  j["text"] = r.text;
  ordered_json labels = ordered_json::object();
  for (const auto& e : r.labels) labels[e.aspect] = std::string(to_string(e.sentiment));
  j["labels"] = labels;
  if (r.nuance) {
    ordered_json nuance = ordered_json::object();
    for (const auto& s : r.nuance->selections) nuance[s.attribute] = s.value;
    j["nuance"] = nuance;
  }
  ordered_json meta = ordered_json::object();
  if (r.meta.length_band) meta["length_band"] = *r.meta.length_band;
  if (r.meta.max_output_tokens) meta["max_output_tokens"] = *r.meta.max_output_tokens;
  meta["completion_status"] = std::string(to_string(r.meta.completion_status));
  meta["prompt_state_id"] = r.meta.prompt_state_id;
  meta["word_count"] = r.meta.word_count;
  if (r.meta.refinement != RefinementStatus::not_run)
    meta["refinement"] = std::string(to_string(r.meta.refinement));
  if (r.meta.duplicate_of) meta["duplicate_of"] = *r.meta.duplicate_of;
  for (const auto& [k, v] : r.meta.extra.items()) meta[k] = v;
  j["meta"] = meta;
  j["source"] = std::string(to_string(r.source));
  if (r.split) j["split"] = std::string(to_string(*r.split));
  for (const auto& [k, v] : r.extra.items()) j[k] = v;
  return j;
}

namespace {

const std::set<std::string_view> kRecordKeys = {"id", "text", "labels", "nuance",
                                                "meta", "source", "split"};
const std::set<std::string_view> kMetaKeys = {"length_band",     "max_output_tokens",
                                              "completion_status", "prompt_state_id",
                                              "word_count",      "refinement",
                                              "duplicate_of"};

}  // namespace

ReviewRecord record_from_json(const json& j, const AspectInventory& inventory,
                              const NuanceSchema& schema, std::size_t line) {
  if (!j.is_object()) throw ParseError("record is not an object", line);
  auto str = [&](const char* key, bool required) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end()) {
      if (required) throw ParseError(std::string("record missing \"") + key + "\"", line);
      return std::nullopt;
    }
    if (!it->is_string()) throw ParseError(std::string("\"") + key + "\" must be a string", line);
    return it->get<std::string>();
  };

  ReviewRecord r;
  r.id = *str("id", true);
  r.set_text(*str("text", true));

  auto labels = j.find("labels");
  if (labels == j.end()) throw ParseError("record missing \"labels\"", line);
  try {
    r.labels = label_set_from_json(*labels);
  } catch (const SchemaError& e) {
    throw ParseError(e.what(), line);
  }
  for (const auto& e : r.labels)
    if (!inventory.contains(e.aspect))
      throw SchemaError(fmt::format("line {}: aspect '{}' is not in the inventory", line, e.aspect));

  if (auto it = j.find("nuance"); it != j.end() && !it->is_null()) {
    try {
      r.nuance = nuance_state_from_json(*it, schema);
    } catch (const SchemaError& e) {
      throw SchemaError(fmt::format("line {}: {}", line, e.what()));
    }
  }

  if (auto it = j.find("meta"); it != j.end()) {
    const auto& m = *it;
    if (!m.is_object()) throw ParseError("\"meta\" must be an object", line);
    if (auto v = m.find("length_band"); v != m.end()) r.meta.length_band = v->get<std::string>();
    if (auto v = m.find("max_output_tokens"); v != m.end()) r.meta.max_output_tokens = v->get<int>();
    if (auto v = m.find("completion_status"); v != m.end()) {
      auto s = parse_completion_status(v->get<std::string>());
      if (!s) throw ParseError("unknown completion_status", line);
      r.meta.completion_status = *s;
    }
    if (auto v = m.find("prompt_state_id"); v != m.end()) r.meta.prompt_state_id = v->get<std::string>();
    if (auto v = m.find("refinement"); v != m.end()) {
      auto s = parse_refinement_status(v->get<std::string>());
      if (!s) throw ParseError("unknown refinement status", line);
      r.meta.refinement = *s;
    }
    if (auto v = m.find("duplicate_of"); v != m.end()) r.meta.duplicate_of = v->get<std::string>();
    for (const auto& [k, v] : m.items())
      if (!kMetaKeys.contains(k)) r.meta.extra[k] = v;
  }
  if (auto s = str("source", false)) {
    auto parsed = parse_record_source(*s);
    if (!parsed) throw ParseError("unknown source '" + *s + "'", line);
    r.source = *parsed;
  }
  if (auto s = str("split", false)) {
    auto parsed = parse_split(*s);
    if (!parsed) throw ParseError("unknown split '" + *s + "'", line);
    r.split = *parsed;
  }
  for (const auto& [k, v] : j.items())
    if (!kRecordKeys.contains(k)) r.extra[k] = v;
  return r;
}

std::filesystem::path provenance_path(const std::filesystem::path& corpus_path) {
  return corpus_path.string() + ".provenance.json";
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot write corpus to " + path.string());
  for (const auto& r : corpus.records) out << record_to_json(r).dump() << '\n';
  const auto& p = corpus.provenance;
  ordered_json prov = {{"generator_run_id", p.generator_run_id},
                       {"prompt_state_id", p.prompt_state_id},
                       {"seed", p.seed ? json(*p.seed) : json(nullptr)}};
  std::ofstream side(provenance_path(path), std::ios::binary);
  side << prov.dump(2) << '\n';
}

Corpus load_corpus(const std::filesystem::path& path, const AspectInventory& inventory,
                   const NuanceSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open corpus " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line_no);
    }
    try {
      corpus.records.push_back(record_from_json(j, inventory, schema, line_no));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  if (std::ifstream side(provenance_path(path)); side) {
    const auto prov = json::parse(side, nullptr, false);
    if (prov.is_object()) {
      corpus.provenance.generator_run_id = prov.value("generator_run_id", std::string{});
      corpus.provenance.prompt_state_id = prov.value("prompt_state_id", std::string{});
      if (auto it = prov.find("seed"); it != prov.end() && it->is_number_unsigned())
        corpus.provenance.seed = it->get<std::uint64_t>();
    }
  }
  return corpus;
}

}  // namespace synthabsa
