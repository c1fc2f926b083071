#include "synthabsa/transfer.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "synthabsa/errors.hpp"

namespace synthabsa {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::string> AspectMapping::overlap_aspects(const AspectInventory& inventory) const {
  std::set<std::string, std::less<>> targets;
  for (const auto& [ext, internal] : map) targets.insert(internal);
  std::vector<std::string> out;
  for (const auto& a : inventory.aspects())
    if (targets.contains(a.id)) out.push_back(a.id);
  return out;
}

std::map<std::string, Sentiment> default_polarity_table() {
  return {{"negative", Sentiment::negative}, {"neg", Sentiment::negative}, {"-1", Sentiment::negative},
          {"neutral", Sentiment::neutral},   {"neu", Sentiment::neutral},  {"0", Sentiment::neutral},
          {"positive", Sentiment::positive}, {"pos", Sentiment::positive}, {"+1", Sentiment::positive},
          {"1", Sentiment::positive}};
}

AspectMapping load_aspect_mapping(std::string_view document, const AspectInventory& inventory) {
  // Track repeated keys inside "map": a plain parse would keep only the last.
  std::vector<std::string> path;
  std::string pending_key;
  std::set<std::string> map_keys;
  std::string repeated;
  auto cb = [&](int depth, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::key) {
      pending_key = parsed.get<std::string>();
      if (depth == 2 && !path.empty() && path.back() == "map" && !map_keys.insert(pending_key).second)
        repeated = pending_key;
    } else if (event == json::parse_event_t::object_start) {
      path.push_back(pending_key);
    } else if (event == json::parse_event_t::object_end) {
      path.pop_back();
    }
    return true;
  };
  json j;
  try {
    j = json::parse(document.begin(), document.end(), cb);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("aspect mapping: ") + e.what());
  }
  if (!repeated.empty()) throw SchemaError("external label '" + repeated + "' is mapped more than once");
  if (!j.is_object() || !j.contains("map") || !j["map"].is_object())
    throw SchemaError("aspect mapping needs a \"map\" object");

  AspectMapping m;
  for (const auto& [ext, target] : j["map"].items()) {
    if (!target.is_string()) throw SchemaError("mapping target for '" + ext + "' must be a single aspect id");
    const auto& t = target.get_ref<const std::string&>();
    if (!inventory.contains(t)) throw SchemaError("mapping target '" + t + "' is not in the aspect inventory");
    m.map.emplace(ext, t);
  }
  if (auto it = j.find("unmapped"); it != j.end()) {
    for (const auto& u : *it) {
      const auto label = u.get<std::string>();
      if (m.map.contains(label)) throw SchemaError("external label '" + label + "' is both mapped and unmapped");
      m.unmapped.push_back(label);
    }
  }
  if (auto it = j.find("polarity"); it != j.end()) {
    for (const auto& [raw, label] : it->items()) {
      const auto s = label.is_string() ? parse_sentiment(label.get_ref<const std::string&>()) : std::nullopt;
      if (!s) throw SchemaError("polarity entry '" + raw + "' must map to negative, neutral or positive");
      m.polarity.emplace(raw, *s);
    }
  } else {
    m.polarity = default_polarity_table();
  }
  if (m.map.empty()) spdlog::warn("aspect mapping is empty; the overlap has no aspects");
  return m;
}

AspectMapping load_aspect_mapping_file(const std::filesystem::path& path, const AspectInventory& inventory) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read aspect mapping " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_aspect_mapping(text, inventory);
}

std::vector<ExternalRecord> load_external_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read external corpus " + path.string());
  std::vector<ExternalRecord> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(e.what(), line);
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
      throw ParseError("external record needs a string 'text'", line);
    if (!j.contains("annotations") || !j["annotations"].is_array())
      throw ParseError("external record needs an 'annotations' array", line);
    ExternalRecord r;
    r.id = j.contains("id") ? j["id"].get<std::string>() : fmt::format("ext-{:06d}", out.size() + 1);
    r.text = j["text"].get<std::string>();
    for (const auto& a : j["annotations"]) {
      if (!a.is_object() || !a.contains("label") || !a.contains("polarity"))
        throw ParseError("annotation needs 'label' and 'polarity'", line);
      const auto& pol = a["polarity"];
      r.annotations.push_back({a["label"].get<std::string>(), pol.is_string() ? pol.get<std::string>() : pol.dump()});
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

Sentiment collapse(const std::vector<Sentiment>& mentions, MultiMentionPolicy policy) {
  if (policy == MultiMentionPolicy::first) return mentions.front();
  int counts[3] = {0, 0, 0};
  for (auto s : mentions) ++counts[sentiment_value(s) + 1];
  const int best = *std::max_element(std::begin(counts), std::end(counts));
  if (std::count(std::begin(counts), std::end(counts), best) > 1) return Sentiment::neutral;
  return sentiment_from_value(static_cast<int>(std::max_element(std::begin(counts), std::end(counts)) - counts) - 1);
}

}  // namespace

OverlapBenchmark map_external_corpus(std::span<const ExternalRecord> records, const AspectMapping& mapping,
                                     const AspectInventory& inventory, MultiMentionPolicy policy) {
  OverlapBenchmark b;
  b.overlap_aspects = mapping.overlap_aspects(inventory);
  for (const auto& a : b.overlap_aspects) b.support[a];
  b.input_count = records.size();
  const std::set<std::string> unmapped(mapping.unmapped.begin(), mapping.unmapped.end());

  std::set<std::string> seen_ids;
  for (const auto& ext : records) {
    if (!seen_ids.insert(ext.id).second) throw SchemaError("external record id '" + ext.id + "' repeats");
    std::map<std::string, std::vector<Sentiment>> mentions;
    for (const auto& a : ext.annotations) {
      auto pol = mapping.polarity.find(a.polarity);
      if (pol == mapping.polarity.end())
        throw SchemaError("unknown polarity '" + a.polarity + "' in record '" + ext.id + "'");
      auto target = mapping.map.find(a.label);
      if (target == mapping.map.end()) {
        if (!unmapped.contains(a.label)) ++b.unlisted_labels[a.label];
        continue;
      }
      mentions[target->second].push_back(pol->second);
    }
    if (mentions.empty()) {
      ++b.dropped_count;
      continue;
    }
    ReviewRecord r;
    r.id = ext.id;
    r.set_text(ext.text);
    r.source = RecordSource::real_transfer;
    r.meta.prompt_state_id = "";
    for (const auto& [aspect, ms] : mentions) {
      const auto s = collapse(ms, policy);
      r.labels.set(aspect, s);
      auto& sup = b.support[aspect];
      ++sup.reviews;
      if (s == Sentiment::positive) ++sup.positive;
      else if (s == Sentiment::neutral) ++sup.neutral;
      else ++sup.negative;
    }
    b.records.push_back(std::move(r));
  }
  for (const auto& [label, n] : b.unlisted_labels)
    spdlog::warn("external label '{}' ({} annotations) is neither mapped nor listed as unmapped", label, n);
  return b;
}

ordered_json support_table_json(const OverlapBenchmark& b) {
  ordered_json rows = ordered_json::array();
  for (const auto& a : b.overlap_aspects) {
    const auto& s = b.support.at(a);
    rows.push_back({{"aspect", a}, {"reviews", s.reviews}, {"positive", s.positive}, {"neutral", s.neutral},
                    {"negative", s.negative}});
  }
  return {{"input_count", b.input_count},
          {"mapped_count", b.records.size()},
          {"dropped_count", b.dropped_count},
          {"overlap_aspects", b.overlap_aspects},
          {"support", rows}};
}

Predictions restrict_to_overlap(const Predictions& predictions, std::span<const std::string> overlap) {
  const std::set<std::string, std::less<>> keep(overlap.begin(), overlap.end());
  Predictions out;
  for (const auto& set : predictions.aspects) {
    AspectSet s;
    for (const auto& a : set)
      if (keep.contains(a)) s.insert(a);
    out.aspects.push_back(std::move(s));
  }
  for (const auto& scores : predictions.sentiments) {
    SentimentScores s;
    for (const auto& [a, v] : scores)
      if (keep.contains(a)) s.emplace(a, v);
    out.sentiments.push_back(std::move(s));
  }
  return out;
}

namespace {

void require_overlap_only(const Predictions& p, std::span<const std::string> overlap) {
  const std::set<std::string, std::less<>> keep(overlap.begin(), overlap.end());
  for (const auto& set : p.aspects)
    for (const auto& a : set)
      if (!keep.contains(a)) throw ContractError("prediction for non-overlap aspect '" + a + "' reached the scorer");
  for (const auto& scores : p.sentiments)
    for (const auto& [a, v] : scores)
      if (!keep.contains(a)) throw ContractError("sentiment for non-overlap aspect '" + a + "' reached the scorer");
}

}  // namespace

EvalReport evaluate_overlap(std::string approach, const Predictions& predictions, const OverlapBenchmark& benchmark) {
  require_overlap_only(predictions, benchmark.overlap_aspects);
  std::vector<LabelSet> gold;
  for (const auto& r : benchmark.records) gold.push_back(r.labels);
  auto report = evaluate_predictions(std::move(approach), gold, predictions.aspects, predictions.sentiments,
                                     benchmark.overlap_aspects);
  report.split_id = split_id(benchmark.records, Split::test);
  report.provenance["benchmark"] = "mapped_real";
  return report;
}

OverlapComparison overlap_matched_comparison(std::string approach, const Predictions& synthetic_predictions,
                                             std::span<const ReviewRecord> synthetic_test,
                                             const Predictions& real_predictions, const OverlapBenchmark& benchmark) {
  OverlapComparison c;
  const auto& overlap = benchmark.overlap_aspects;
  const std::set<std::string, std::less<>> keep(overlap.begin(), overlap.end());
  std::vector<LabelSet> gold;
  for (const auto& r : synthetic_test) {
    LabelSet g;
    for (const auto& e : r.labels)
      if (keep.contains(e.aspect)) g.set(e.aspect, e.sentiment);
    gold.push_back(std::move(g));
  }
  const auto syn = restrict_to_overlap(synthetic_predictions, overlap);
  c.synthetic = evaluate_predictions(approach, gold, syn.aspects, syn.sentiments, overlap);
  c.synthetic.split_id = split_id(synthetic_test, Split::test);
  c.synthetic.provenance["benchmark"] = "synthetic_overlap";
  c.real = evaluate_overlap(approach, restrict_to_overlap(real_predictions, overlap), benchmark);
  c.delta_micro_f1 = c.real.detection.aggregates.micro_f1 - c.synthetic.detection.aggregates.micro_f1;
  if (c.real.sentiment.mse && c.synthetic.sentiment.mse)
    c.delta_sentiment_mse = *c.real.sentiment.mse - *c.synthetic.sentiment.mse;
  return c;
}

ordered_json to_json(const OverlapComparison& c) {
  auto mse = [](const EvalReport& r) { return r.sentiment.mse ? json(*r.sentiment.mse) : json(nullptr); };
  ordered_json row = {
      {"Approach", c.real.approach},
      {"Synthetic overlap micro-F1", c.synthetic.detection.aggregates.micro_f1},
      {"Mapped real micro-F1", c.real.detection.aggregates.micro_f1},
      {"Δ real minus synthetic", c.delta_micro_f1},
      {"Synthetic overlap sentiment MSE", mse(c.synthetic)},
      {"Mapped real sentiment MSE", mse(c.real)},
  };
  return {{"row", row}, {"synthetic_report", to_json(c.synthetic)}, {"real_report", to_json(c.real)}};
}

}  // namespace synthabsa
