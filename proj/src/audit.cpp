#include "synthabsa/audit.hpp"

#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "synthabsa/errors.hpp"
#include "synthabsa/generation.hpp"
#include "synthabsa/random.hpp"

namespace synthabsa {

using nlohmann::json;
using nlohmann::ordered_json;

std::string build_audit_prompt(const ReviewRecord& record) {
  std::string p =
      "You are auditing whether a student course review actually expresses its declared aspect "
      "sentiments. For each declared aspect decide whether the text clearly discusses it "
      "(supported) and, if so, whether the expressed polarity equals the declared one "
      "(sentiment_match). Be strict: an aspect that is only implied is not supported.\n\n"
      "Declared aspect sentiments: ";
  p += render_aspect_block(record.labels);
  p += "\n\nReview:\n<<<\n";
  p += record.text;
  p += "\n>>>\n\nAnswer with exactly one JSON object {\"verdicts\": {\"<aspect>\": {\"supported\": true or "
       "false, \"sentiment_match\": true or false}}} covering exactly the declared aspects.";
  return p;
}

std::optional<std::vector<AuditVerdict>> parse_audit_response(std::string_view raw, const ReviewRecord& record,
                                                              std::string& error) {
  const json j = json::parse(raw.begin(), raw.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object() || !j.contains("verdicts") || !j["verdicts"].is_object()) {
    error = "response is not an object with a \"verdicts\" object";
    return std::nullopt;
  }
  const auto& v = j["verdicts"];
  if (v.size() != record.labels.size()) {
    error = "verdicts do not cover exactly the declared aspects";
    return std::nullopt;
  }
  std::vector<AuditVerdict> out;
  for (const auto& e : record.labels) {
    auto it = v.find(e.aspect);
    if (it == v.end() || !it->is_object()) {
      error = "missing verdict for '" + e.aspect + "'";
      return std::nullopt;
    }
    const auto s = it->find("supported");
    const auto m = it->find("sentiment_match");
    if (s == it->end() || m == it->end() || !s->is_boolean() || !m->is_boolean()) {
      error = "verdict for '" + e.aspect + "' needs boolean supported and sentiment_match";
      return std::nullopt;
    }
    if (m->get<bool>() && !s->get<bool>()) {
      error = "verdict for '" + e.aspect + "' matches sentiment without support";
      return std::nullopt;
    }
    out.push_back({record.id, e.aspect, s->get<bool>(), m->get<bool>(), false});
  }
  return out;
}

namespace {

std::vector<AuditVerdict> conservative(const ReviewRecord& record) {
  std::vector<AuditVerdict> out;
  for (const auto& e : record.labels) out.push_back({record.id, e.aspect, false, false, true});
  return out;
}

}  // namespace

std::vector<AuditVerdict> audit_reviews(Provider& provider, std::span<const ReviewRecord> sample,
                                        const DispatchOptions& options) {
  std::vector<CompletionRequest> requests;
  for (const auto& r : sample) requests.push_back({r.id, build_audit_prompt(r), 0});
  const auto first = dispatch_batch(provider, requests, options);

  std::vector<std::optional<std::vector<AuditVerdict>>> parsed(sample.size());
  std::vector<CompletionRequest> reasks;
  std::vector<std::size_t> reask_index;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    std::string error;
    if (first[i].ok()) parsed[i] = parse_audit_response(first[i].response->text, sample[i], error);
    if (parsed[i]) continue;
    if (!first[i].ok()) {
      spdlog::warn("audit of {} failed: {}", sample[i].id, first[i].error);
      continue;
    }
    reasks.push_back({sample[i].id + "|reask", requests[i].prompt, 0});
    reask_index.push_back(i);
  }
  const auto second = dispatch_batch(provider, reasks, options);
  for (std::size_t k = 0; k < second.size(); ++k) {
    const std::size_t i = reask_index[k];
    std::string error;
    if (second[k].ok()) parsed[i] = parse_audit_response(second[k].response->text, sample[i], error);
    if (!parsed[i]) spdlog::warn("audit of {} unusable after re-ask; recorded as unsupported", sample[i].id);
  }

  std::vector<AuditVerdict> out;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    auto v = parsed[i] ? std::move(*parsed[i]) : conservative(sample[i]);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

AuditReport aggregate_audit(std::span<const AuditVerdict> verdicts, std::span<const ReviewRecord> sample) {
  std::map<std::pair<std::string, std::string>, const AuditVerdict*> by_pair;
  for (const auto& v : verdicts) by_pair[{v.review_id, v.aspect}] = &v;

  AuditReport r;
  r.n_reviews = sample.size();
  std::vector<std::string> missing;
  std::size_t rows_supported = 0, rows_matched = 0, used = 0;
  for (const auto& rec : sample) {
    bool all_supported = true, all_matched = true;
    for (const auto& e : rec.labels) {
      ++r.n_declared_aspects;
      auto it = by_pair.find({rec.id, e.aspect});
      if (it == by_pair.end()) {
        missing.push_back(rec.id + "/" + e.aspect);
        continue;
      }
      ++used;
      const auto& v = *it->second;
      r.n_supported += v.supported;
      r.n_matched += v.sentiment_match;
      r.n_flagged += v.flagged;
      all_supported = all_supported && v.supported;
      all_matched = all_matched && v.sentiment_match;
    }
    rows_supported += all_supported;
    rows_matched += all_matched;
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ArgumentError("audit verdicts missing for: " + list);
  }
  if (used != by_pair.size()) throw ArgumentError("audit verdicts include pairs that were not declared");
  if (r.n_declared_aspects > 0) {
    r.aspect_support_rate = static_cast<double>(r.n_supported) / static_cast<double>(r.n_declared_aspects);
    r.aspect_sentiment_match_rate = static_cast<double>(r.n_matched) / static_cast<double>(r.n_declared_aspects);
  }
  if (r.n_reviews > 0) {
    r.row_support_rate = static_cast<double>(rows_supported) / static_cast<double>(r.n_reviews);
    r.row_sentiment_match_rate = static_cast<double>(rows_matched) / static_cast<double>(r.n_reviews);
  }
  return r;
}

ordered_json to_json(const AuditReport& r) {
  return {{"n_reviews", r.n_reviews},
          {"n_declared_aspects", r.n_declared_aspects},
          {"n_supported", r.n_supported},
          {"n_matched", r.n_matched},
          {"n_flagged", r.n_flagged},
          {"aspect_support_rate", r.aspect_support_rate},
          {"aspect_sentiment_match_rate", r.aspect_sentiment_match_rate},
          {"row_support_rate", r.row_support_rate},
          {"row_sentiment_match_rate", r.row_sentiment_match_rate}};
}

json verdicts_to_json(std::span<const AuditVerdict> verdicts) {
  json out = json::array();
  for (const auto& v : verdicts)
    out.push_back({{"review_id", v.review_id},
                   {"aspect", v.aspect},
                   {"supported", v.supported},
                   {"sentiment_match", v.sentiment_match},
                   {"flagged", v.flagged}});
  return out;
}

std::vector<AuditVerdict> verdicts_from_json(const json& j) {
  std::vector<AuditVerdict> out;
  for (const auto& v : j) {
    AuditVerdict a{v.at("review_id").get<std::string>(), v.at("aspect").get<std::string>(),
                   v.at("supported").get<bool>(), v.at("sentiment_match").get<bool>(), v.value("flagged", false)};
    if (a.sentiment_match && !a.supported)
      throw SchemaError("verdict " + a.review_id + "/" + a.aspect + " matches sentiment without support");
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<ReviewRecord> audit_sample(std::span<const ReviewRecord> records, std::size_t n, std::uint64_t seed) {
  if (n > records.size())
    throw ArgumentError("audit sample of " + std::to_string(n) + " exceeds " + std::to_string(records.size()) +
                        " records");
  Rng rng = derive_stream(seed, "audit");
  std::vector<ReviewRecord> out;
  for (auto i : rng.sample_indices(records.size(), n)) out.push_back(records[i]);
  return out;
}

}  // namespace synthabsa
