#pragma once

// Label-faithfulness audit: does the text support each declared aspect, and
// does the polarity match?

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthabsa/provider.hpp"
#include "synthabsa/schema.hpp"

namespace synthabsa {

struct AuditVerdict {
  std::string review_id;
  std::string aspect;
  bool supported = false;
  bool sentiment_match = false;  // never true unless supported
  bool flagged = false;          // conservative fallback after a failure
};

/// Text plus declared aspect sentiments; demands
/// {"verdicts": {"<aspect>": {"supported": bool, "sentiment_match": bool}}}
/// with exactly the declared aspects.
std::string build_audit_prompt(const ReviewRecord& record);

/// Strict parse against the declared labels. Never throws.
std::optional<std::vector<AuditVerdict>> parse_audit_response(std::string_view raw, const ReviewRecord& record,
                                                              std::string& error);

/// One verdict per declared (review, aspect). Unparseable answers are
/// re-asked once, then recorded as unsupported and flagged.
std::vector<AuditVerdict> audit_reviews(Provider& provider, std::span<const ReviewRecord> sample,
                                        const DispatchOptions& options = {});

struct AuditReport {
  std::size_t n_reviews = 0;
  std::size_t n_declared_aspects = 0;
  std::size_t n_supported = 0;
  std::size_t n_matched = 0;
  std::size_t n_flagged = 0;
  double aspect_support_rate = 0.0;
  double aspect_sentiment_match_rate = 0.0;
  double row_support_rate = 0.0;
  double row_sentiment_match_rate = 0.0;
};

/// Throws ArgumentError listing every declared (review, aspect) pair without
/// a verdict, and for verdicts on undeclared pairs.
AuditReport aggregate_audit(std::span<const AuditVerdict> verdicts, std::span<const ReviewRecord> sample);

nlohmann::ordered_json to_json(const AuditReport& report);
nlohmann::json verdicts_to_json(std::span<const AuditVerdict> verdicts);
std::vector<AuditVerdict> verdicts_from_json(const nlohmann::json& j);

/// Seeded uniform draw of `n` records without replacement, in draw order.
std::vector<ReviewRecord> audit_sample(std::span<const ReviewRecord> records, std::size_t n, std::uint64_t seed);

}  // namespace synthabsa
